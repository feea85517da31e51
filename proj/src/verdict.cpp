#include "zr/verdict.hpp"

#include <algorithm>
#include <map>

#include "zr/error.hpp"

namespace zr::verdict {

using engine::Experiment;
using nlohmann::json;

std::string_view to_string(CellOutcome o) noexcept
{
    switch (o) {
    case CellOutcome::ZeroRated: return "zero-rated";
    case CellOutcome::Billed: return "billed";
    case CellOutcome::Indeterminate: return "indeterminate";
    }
    return "?";
}

namespace {

std::optional<CellOutcome> parse_outcome(std::string_view s)
{
    for (auto o : {CellOutcome::ZeroRated, CellOutcome::Billed, CellOutcome::Indeterminate})
        if (s == to_string(o)) return o;
    return std::nullopt;
}

constexpr Classification kAllClassifications[] = {Classification::IpOnly,      Classification::HostOnly,
                                                  Classification::IpAndHost,   Classification::FullyBilled,
                                                  Classification::NotAvailable, Classification::Unknown,
                                                  Classification::Indeterminate};
constexpr QualifierKind kAllQualifierKinds[] = {QualifierKind::IPv4Only,  QualifierKind::IPv6Only,
                                                QualifierKind::HTTPSOnly, QualifierKind::HTTPOnly,
                                                QualifierKind::HTTP3Only, QualifierKind::TCPOnly,
                                                QualifierKind::Classes};
constexpr RoamingZeroRating kAllRoaming[] = {RoamingZeroRating::Yes, RoamingZeroRating::No,
                                             RoamingZeroRating::NotOffered, RoamingZeroRating::NotTested};

} // namespace

std::string_view to_string(Classification c) noexcept
{
    switch (c) {
    case Classification::IpOnly: return "ip-only";
    case Classification::HostOnly: return "host-only";
    case Classification::IpAndHost: return "ip-and-host";
    case Classification::FullyBilled: return "fully-billed";
    case Classification::NotAvailable: return "not-available";
    case Classification::Unknown: return "unknown";
    case Classification::Indeterminate: return "indeterminate";
    }
    return "?";
}

std::optional<Classification> parse_classification(std::string_view s) noexcept
{
    for (auto c : kAllClassifications)
        if (s == to_string(c)) return c;
    return std::nullopt;
}

std::string_view to_string(QualifierKind k) noexcept
{
    switch (k) {
    case QualifierKind::IPv4Only: return "ipv4-only";
    case QualifierKind::IPv6Only: return "ipv6-only";
    case QualifierKind::HTTPSOnly: return "https-only";
    case QualifierKind::HTTPOnly: return "http-only";
    case QualifierKind::HTTP3Only: return "http3-only";
    case QualifierKind::TCPOnly: return "tcp-only";
    case QualifierKind::Classes: return "classes";
    }
    return "?";
}

std::string_view to_string(RoamingZeroRating r) noexcept
{
    switch (r) {
    case RoamingZeroRating::Yes: return "yes";
    case RoamingZeroRating::No: return "no";
    case RoamingZeroRating::NotOffered: return "not-offered";
    case RoamingZeroRating::NotTested: return "not-tested";
    }
    return "?";
}

std::optional<RoamingZeroRating> parse_roaming_zero_rating(std::string_view s) noexcept
{
    for (auto r : kAllRoaming)
        if (s == to_string(r)) return r;
    return std::nullopt;
}

std::optional<Qualifier> qualify(FlowClassSet covered, FlowClassSet tested)
{
    if (covered == tested) return std::nullopt;
    const std::pair<QualifierKind, FlowClassSet> candidates[] = {
        {QualifierKind::IPv4Only, FlowClassSet::of_version(net::IpVersion::V4)},
        {QualifierKind::IPv6Only, FlowClassSet::of_version(net::IpVersion::V6)},
        {QualifierKind::HTTPSOnly, FlowClassSet::of_protocol(Protocol::Https)},
        {QualifierKind::HTTPOnly, FlowClassSet::of_protocol(Protocol::Http)},
        {QualifierKind::HTTP3Only, FlowClassSet::of_protocol(Protocol::Http3)},
        {QualifierKind::TCPOnly, FlowClassSet::all() - FlowClassSet::of_protocol(Protocol::Http3)},
    };
    for (const auto& [kind, set] : candidates)
        if ((tested & set) == covered) return Qualifier{kind, FlowClassSet::none()};
    return Qualifier{QualifierKind::Classes, covered};
}

std::string footnote(const Qualifier& q)
{
    switch (q.kind) {
    case QualifierKind::IPv4Only: return "a";
    case QualifierKind::HTTPSOnly: return "b";
    case QualifierKind::TCPOnly: return "c";
    case QualifierKind::IPv6Only: return "v6";
    case QualifierKind::HTTPOnly: return "http";
    case QualifierKind::HTTP3Only: return "h3";
    case QualifierKind::Classes: {
        std::string out = "{";
        for (auto c : q.classes.members()) {
            if (out.size() > 1) out += ',';
            out += c.to_string();
        }
        return out + "}";
    }
    }
    return "?";
}

std::vector<Qualifier> Verdict::qualifiers() const
{
    std::vector<Qualifier> out;
    for (const auto& q : {ip_qualifier, host_qualifier})
        if (q && std::find(out.begin(), out.end(), *q) == out.end()) out.push_back(*q);
    return out;
}

std::string Verdict::cell() const
{
    auto part = [](std::string name, const std::optional<Qualifier>& q) {
        return q ? name + "^" + footnote(*q) : name;
    };
    switch (classification) {
    case Classification::FullyBilled: return "$";
    case Classification::NotAvailable: return "×";
    case Classification::Unknown: return "?";
    case Classification::Indeterminate: return "-";
    case Classification::IpOnly: return part("IP", ip_qualifier);
    case Classification::HostOnly: return part("Host", host_qualifier);
    case Classification::IpAndHost: return part("IP", ip_qualifier) + ", " + part("Host", host_qualifier);
    }
    return "?";
}

Verdict not_available(const std::string& operator_name, const std::string& application)
{
    Verdict v;
    v.operator_name = operator_name;
    v.application = application;
    v.classification = Classification::NotAvailable;
    return v;
}

Verdict indeterminate(const std::string& operator_name, const std::string& application, FlowClassSet tested,
                      const std::vector<EvidenceCell>& evidence)
{
    Verdict v;
    v.operator_name = operator_name;
    v.application = application;
    v.classification = Classification::Indeterminate;
    v.tested = tested;
    v.evidence = evidence;
    return v;
}

Verdict infer_verdict(const std::string& operator_name, const std::string& application, FlowClassSet tested,
                      const std::vector<EvidenceCell>& evidence)
{
    std::map<std::pair<Experiment, unsigned>, CellOutcome> cells;
    for (const auto& c : evidence) cells[{c.experiment, c.flow_class.index()}] = c.outcome;

    auto outcome = [&](Experiment e, FlowClass fc) {
        auto it = cells.find({e, fc.index()});
        if (it == cells.end() || it->second == CellOutcome::Indeterminate)
            throw Error(Errc::InsufficientEvidence, std::string(to_string(e)) + " " + fc.to_string() + " of " +
                                                        application + " at " + operator_name + " is missing");
        return it->second;
    };

    Verdict v;
    v.operator_name = operator_name;
    v.application = application;
    v.tested = tested;
    v.evidence = evidence;
    if (tested.empty()) throw Error(Errc::InsufficientEvidence, "no flow class tested");

    for (auto fc : tested.members()) {
        if (outcome(Experiment::Verify, fc) == CellOutcome::Billed) continue;
        const bool ip = outcome(Experiment::IpProbe, fc) == CellOutcome::ZeroRated;
        const bool host = outcome(Experiment::HostProbe, fc) == CellOutcome::ZeroRated;
        if (ip) v.ip_covered.insert(fc);
        if (host) v.host_covered.insert(fc);
        if (!ip && !host) v.unexplained.insert(fc);
    }

    const bool ip = !v.ip_covered.empty(), host = !v.host_covered.empty();
    if (ip && host) v.classification = Classification::IpAndHost;
    else if (ip) v.classification = Classification::IpOnly;
    else if (host) v.classification = Classification::HostOnly;
    else if (!v.unexplained.empty()) v.classification = Classification::Unknown;
    else v.classification = Classification::FullyBilled;

    if (ip) v.ip_qualifier = qualify(v.ip_covered, tested);
    if (host) v.host_qualifier = qualify(v.host_covered, tested);
    return v;
}

RoamingZeroRating infer_roaming(const std::vector<EvidenceCell>& roaming_verify)
{
    if (roaming_verify.empty()) return RoamingZeroRating::NotTested;
    bool determinate = false;
    for (const auto& c : roaming_verify) {
        if (c.outcome == CellOutcome::ZeroRated) return RoamingZeroRating::Yes;
        if (c.outcome == CellOutcome::Billed) determinate = true;
    }
    if (!determinate) throw Error(Errc::InsufficientEvidence, "no roaming cell could be decoded");
    return RoamingZeroRating::No;
}

// ---------------------------------------------------------------- json

namespace {

json qualifier_json(const std::optional<Qualifier>& q)
{
    if (!q) return nullptr;
    json j = {{"kind", to_string(q->kind)}};
    if (q->kind == QualifierKind::Classes) {
        j["classes"] = json::array();
        for (auto c : q->classes.members()) j["classes"].push_back(c.to_string());
    }
    return j;
}

FlowClassSet classes_from_json(const json& j)
{
    FlowClassSet s;
    for (const auto& e : j) {
        auto c = FlowClass::parse(e.get<std::string>());
        if (!c) throw Error(Errc::ParseFailure, "bad flow class " + e.dump());
        s.insert(*c);
    }
    return s;
}

json classes_json(FlowClassSet s)
{
    json a = json::array();
    for (auto c : s.members()) a.push_back(c.to_string());
    return a;
}

std::optional<Qualifier> qualifier_from_json(const json& j)
{
    if (j.is_null()) return std::nullopt;
    const auto name = j.at("kind").get<std::string>();
    for (auto k : kAllQualifierKinds)
        if (name == to_string(k))
            return Qualifier{k, k == QualifierKind::Classes ? classes_from_json(j.at("classes")) : FlowClassSet{}};
    throw Error(Errc::ParseFailure, "bad qualifier " + name);
}

} // namespace

json to_json(const EvidenceCell& c)
{
    json j = {{"experiment", engine::to_string(c.experiment)},
              {"flow_class", c.flow_class.to_string()},
              {"outcome", to_string(c.outcome)},
              {"payload_index", c.payload_index},
              {"session_bitmask", nullptr}};
    if (c.session_bitmask) j["session_bitmask"] = *c.session_bitmask;
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

EvidenceCell evidence_from_json(const json& j)
{
    try {
        EvidenceCell c;
        auto e = engine::parse_experiment(j.at("experiment").get<std::string>());
        auto fc = FlowClass::parse(j.at("flow_class").get<std::string>());
        auto o = parse_outcome(j.at("outcome").get<std::string>());
        if (!e || !fc || !o) throw Error(Errc::ParseFailure, "bad evidence cell " + j.dump());
        c.experiment = *e;
        c.flow_class = *fc;
        c.outcome = *o;
        c.payload_index = j.at("payload_index").get<unsigned>();
        if (!j.at("session_bitmask").is_null()) c.session_bitmask = j["session_bitmask"].get<std::uint32_t>();
        c.note = j.value("note", "");
        return c;
    } catch (const json::exception& ex) {
        throw Error(Errc::ParseFailure, ex.what());
    }
}

json to_json(const Verdict& v)
{
    json ev = json::array();
    for (const auto& c : v.evidence) ev.push_back(to_json(c));
    json quals = json::array();
    for (const auto& q : v.qualifiers()) quals.push_back(to_string(q.kind));
    return {{"operator", v.operator_name},
            {"application", v.application},
            {"classification", to_string(v.classification)},
            {"cell", v.cell()},
            {"qualifiers", quals},
            {"tested", classes_json(v.tested)},
            {"ip_covered", classes_json(v.ip_covered)},
            {"host_covered", classes_json(v.host_covered)},
            {"unexplained", classes_json(v.unexplained)},
            {"ip_qualifier", qualifier_json(v.ip_qualifier)},
            {"host_qualifier", qualifier_json(v.host_qualifier)},
            {"evidence", ev}};
}

Verdict verdict_from_json(const json& j)
{
    try {
        Verdict v;
        v.operator_name = j.at("operator").get<std::string>();
        v.application = j.at("application").get<std::string>();
        auto c = parse_classification(j.at("classification").get<std::string>());
        if (!c) throw Error(Errc::ParseFailure, "bad classification");
        v.classification = *c;
        v.tested = classes_from_json(j.at("tested"));
        v.ip_covered = classes_from_json(j.at("ip_covered"));
        v.host_covered = classes_from_json(j.at("host_covered"));
        v.unexplained = classes_from_json(j.at("unexplained"));
        v.ip_qualifier = qualifier_from_json(j.at("ip_qualifier"));
        v.host_qualifier = qualifier_from_json(j.at("host_qualifier"));
        for (const auto& e : j.at("evidence")) v.evidence.push_back(evidence_from_json(e));
        return v;
    } catch (const json::exception& ex) {
        throw Error(Errc::ParseFailure, ex.what());
    }
}

} // namespace zr::verdict
