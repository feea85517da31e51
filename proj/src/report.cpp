#include "zr/report.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "zr/error.hpp"

namespace zr::report {

using nlohmann::json;

bool CampaignReport::aborted() const
{
    for (const auto& o : operators)
        if (o.aborted) return true;
    return false;
}

std::string render_roaming(verdict::RoamingZeroRating r)
{
    switch (r) {
    case verdict::RoamingZeroRating::Yes: return "Yes";
    case verdict::RoamingZeroRating::No: return "No";
    case verdict::RoamingZeroRating::NotOffered: return "×";
    case verdict::RoamingZeroRating::NotTested: return "?";
    }
    return "?";
}

std::optional<Format> parse_format(std::string_view s) noexcept
{
    if (s == "json") return Format::Json;
    if (s == "csv") return Format::Csv;
    if (s == "text" || s == "txt") return Format::Text;
    return std::nullopt;
}

// ---------------------------------------------------------------- json

namespace {

json payload_json(const PayloadRecord& p)
{
    return {{"cell", p.cell},
            {"target_bytes", p.target_bytes},
            {"bytes_sent", p.bytes_sent},
            {"bytes_received", p.bytes_received},
            {"requests", p.requests},
            {"connections", p.connections},
            {"protocol_used", p.protocol_used},
            {"error", p.error}};
}

PayloadRecord payload_from_json(const json& j)
{
    PayloadRecord p;
    p.cell = j.at("cell").get<int>();
    p.target_bytes = j.at("target_bytes").get<std::uint64_t>();
    p.bytes_sent = j.at("bytes_sent").get<std::uint64_t>();
    p.bytes_received = j.at("bytes_received").get<std::uint64_t>();
    p.requests = j.at("requests").get<std::uint32_t>();
    p.connections = j.at("connections").get<std::uint32_t>();
    p.protocol_used = j.at("protocol_used").get<std::string>();
    p.error = j.at("error").get<std::string>();
    return p;
}

json cells_json(const std::vector<verdict::EvidenceCell>& cells)
{
    json a = json::array();
    for (const auto& c : cells) a.push_back(verdict::to_json(c));
    return a;
}

std::vector<verdict::EvidenceCell> cells_from_json(const json& j)
{
    std::vector<verdict::EvidenceCell> out;
    for (const auto& c : j) out.push_back(verdict::evidence_from_json(c));
    return out;
}

json session_json(const SessionRecord& s, bool normalized)
{
    json j = {{"label", s.label},
              {"roaming", s.roaming},
              {"cells", cells_json(s.cells)},
              {"sizes", s.sizes},
              {"control_size", s.control_size},
              {"decode_granularity", s.decode_granularity},
              {"slack_budget", s.slack_budget},
              {"settled", s.settled},
              {"bitmask", nullptr},
              {"error", s.error}};
    if (s.bitmask) j["bitmask"] = *s.bitmask;
    if (normalized) return j;
    j["baseline_remaining"] = s.baseline_remaining;
    j["settled_remaining"] = s.settled_remaining;
    j["residual"] = s.residual;
    j["started_ms"] = s.started_ms;
    j["finished_ms"] = s.finished_ms;
    json p = json::array();
    for (const auto& r : s.payloads) p.push_back(payload_json(r));
    j["payloads"] = p;
    return j;
}

SessionRecord session_from_json(const json& j)
{
    SessionRecord s;
    s.label = j.at("label").get<std::string>();
    s.roaming = j.at("roaming").get<bool>();
    s.cells = cells_from_json(j.at("cells"));
    s.sizes = j.at("sizes").get<std::vector<std::uint64_t>>();
    s.control_size = j.at("control_size").get<std::uint64_t>();
    s.decode_granularity = j.at("decode_granularity").get<std::uint64_t>();
    s.slack_budget = j.at("slack_budget").get<std::uint64_t>();
    s.settled = j.at("settled").get<bool>();
    if (!j.at("bitmask").is_null()) s.bitmask = j["bitmask"].get<std::uint32_t>();
    s.error = j.at("error").get<std::string>();
    s.baseline_remaining = j.value("baseline_remaining", std::uint64_t{0});
    s.settled_remaining = j.value("settled_remaining", std::uint64_t{0});
    s.residual = j.value("residual", std::int64_t{0});
    s.started_ms = j.value("started_ms", std::int64_t{0});
    s.finished_ms = j.value("finished_ms", std::int64_t{0});
    if (j.contains("payloads"))
        for (const auto& p : j["payloads"]) s.payloads.push_back(payload_from_json(p));
    return s;
}

} // namespace

json to_json(const CampaignReport& r, bool normalized)
{
    json ops = json::array();
    for (const auto& o : r.operators) {
        json verdicts = json::array();
        for (const auto& v : o.verdicts) verdicts.push_back(verdict::to_json(v));
        json sessions = json::array();
        for (const auto& s : o.sessions) sessions.push_back(session_json(s, normalized));
        json jo = {{"name", o.name},
                   {"roaming", verdict::to_string(o.roaming)},
                   {"roaming_evidence", cells_json(o.roaming_evidence)},
                   {"verdicts", verdicts},
                   {"aborted", o.aborted},
                   {"abort_reason", o.abort_reason},
                   {"sessions", sessions}};
        if (!normalized) jo["warnings"] = o.warnings;
        ops.push_back(std::move(jo));
    }
    json j = {{"format", "zr-audit-report/1"},
              {"normalized", normalized},
              {"base_unit", r.base_unit},
              {"applications", r.applications},
              {"operators", ops}};
    if (!normalized) {
        j["started_ms"] = r.started_ms;
        j["finished_ms"] = r.finished_ms;
    }
    return j;
}

CampaignReport report_from_json(const json& j)
{
    try {
        if (j.at("format") != "zr-audit-report/1") throw Error(Errc::ParseFailure, "unknown report format");
        CampaignReport r;
        r.base_unit = j.at("base_unit").get<std::uint64_t>();
        r.applications = j.at("applications").get<std::vector<std::string>>();
        r.started_ms = j.value("started_ms", std::int64_t{0});
        r.finished_ms = j.value("finished_ms", std::int64_t{0});
        for (const auto& jo : j.at("operators")) {
            OperatorResult o;
            o.name = jo.at("name").get<std::string>();
            auto roaming = verdict::parse_roaming_zero_rating(jo.at("roaming").get<std::string>());
            if (!roaming) throw Error(Errc::ParseFailure, "bad roaming value");
            o.roaming = *roaming;
            o.roaming_evidence = cells_from_json(jo.at("roaming_evidence"));
            for (const auto& v : jo.at("verdicts")) o.verdicts.push_back(verdict::verdict_from_json(v));
            o.aborted = jo.at("aborted").get<bool>();
            o.abort_reason = jo.at("abort_reason").get<std::string>();
            if (jo.contains("warnings")) o.warnings = jo["warnings"].get<std::vector<std::string>>();
            for (const auto& s : jo.at("sessions")) o.sessions.push_back(session_from_json(s));
            r.operators.push_back(std::move(o));
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(Errc::ParseFailure, e.what());
    }
}

// ---------------------------------------------------------------- tables

namespace {

std::size_t display_width(const std::string& s)
{
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> matrix(const CampaignReport& r)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head = {"Operator", "Roaming"};
    head.insert(head.end(), r.applications.begin(), r.applications.end());
    rows.push_back(head);
    for (const auto& o : r.operators) {
        std::vector<std::string> row = {o.name, render_roaming(o.roaming)};
        for (const auto& app : r.applications) {
            std::string cell = "-";
            for (const auto& v : o.verdicts)
                if (v.application == app) cell = v.cell();
            row.push_back(cell);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace

std::string render_csv(const CampaignReport& r)
{
    std::ostringstream out;
    for (const auto& row : matrix(r)) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
        out << "\n";
    }
    return out.str();
}

std::string render_text(const CampaignReport& r)
{
    const auto rows = matrix(r);
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], display_width(row[i]));

    std::ostringstream out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            line += row[i];
            if (i + 1 < row.size()) line += std::string(width[i] - display_width(row[i]) + 2, ' ');
        }
        out << line << "\n";
    }

    std::set<std::string> extra;
    for (const auto& o : r.operators) {
        for (const auto& v : o.verdicts) {
            if (v.classification == verdict::Classification::Unknown) extra.insert("? zero-rated, mechanism unidentified.");
            if (v.classification == verdict::Classification::Indeterminate) extra.insert("- indeterminate.");
            for (const auto& q : v.qualifiers()) {
                switch (q.kind) {
                case verdict::QualifierKind::IPv6Only: extra.insert("v6 IPv6 only."); break;
                case verdict::QualifierKind::HTTPOnly: extra.insert("http HTTP only."); break;
                case verdict::QualifierKind::HTTP3Only: extra.insert("h3 HTTP3 only."); break;
                case verdict::QualifierKind::Classes: extra.insert("{...} covered flow classes."); break;
                default: break;
                }
            }
        }
        if (o.roaming == verdict::RoamingZeroRating::NotTested) extra.insert("? roaming not tested.");
    }
    out << "\n$ traffic fully billed.  × not part of zero-rating tariff.\n"
        << "a IPv4 only.  b HTTPS only.  c TCP only.\n";
    for (const auto& e : extra) out << e << "\n";
    return out.str();
}

std::vector<std::string> emit_reports(const CampaignReport& r, const std::string& dir,
                                      const std::vector<Format>& formats, bool normalized)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + dir + ": " + ec.message());
    std::vector<std::string> written;
    for (auto f : formats) {
        std::string name, body;
        switch (f) {
        case Format::Json: name = "report.json"; body = to_json(r, normalized).dump(2) + "\n"; break;
        case Format::Csv: name = "report.csv"; body = render_csv(r); break;
        case Format::Text: name = "report.txt"; body = render_text(r); break;
        }
        const auto path = (std::filesystem::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << body;
        out.close();
        if (!out) throw Error(Errc::IoFailure, "cannot write " + path);
        written.push_back(path);
    }
    return written;
}

} // namespace zr::report
