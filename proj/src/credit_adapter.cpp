#include "zr/credit_adapter.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "zr/error.hpp"

namespace zr::credit {

using nlohmann::json;

std::string_view to_string(AdapterKind k) noexcept
{
    switch (k) {
    case AdapterKind::SimulatedApi: return "simulated-api";
    case AdapterKind::ScriptedCommand: return "scripted-command";
    case AdapterKind::FileWatch: return "file-watch";
    }
    return "?";
}

std::optional<AdapterKind> parse_adapter_kind(std::string_view s) noexcept
{
    for (auto k : {AdapterKind::SimulatedApi, AdapterKind::ScriptedCommand, AdapterKind::FileWatch})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

void AdapterSpec::validate() const
{
    if (min_poll_interval < std::chrono::seconds(1))
        throw Error(Errc::ConfigInvalid, id + ": min_poll_interval must be at least 1 s");
    if (staleness_bound.count() < 0) throw Error(Errc::ConfigInvalid, id + ": negative staleness bound");
    auto need = [&](const char* key) {
        if (!parameters.count(key)) throw Error(Errc::ConfigInvalid, id + ": missing parameter '" + key + "'");
    };
    switch (kind) {
    case AdapterKind::SimulatedApi:
        need("url");
        need("subscriber");
        break;
    case AdapterKind::ScriptedCommand: need("command"); break;
    case AdapterKind::FileWatch: need("path"); break;
    }
}

json to_json(const AdapterSpec& s)
{
    return {{"id", s.id},
            {"kind", std::string(to_string(s.kind))},
            {"parameters", s.parameters},
            {"min_poll_interval_ms", s.min_poll_interval.count()},
            {"staleness_bound_ms", s.staleness_bound.count()}};
}

AdapterSpec adapter_from_json(const json& j)
{
    try {
        AdapterSpec s;
        s.id = j.value("id", s.id);
        auto kind = parse_adapter_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::ConfigInvalid, "unknown adapter kind " + j.at("kind").dump());
        s.kind = *kind;
        const json params = j.value("parameters", json::object());
        for (auto& [k, v] : params.items())
            s.parameters[k] = v.is_string() ? v.get<std::string>() : v.dump();
        s.min_poll_interval = std::chrono::milliseconds(j.value("min_poll_interval_ms", std::int64_t{1000}));
        s.staleness_bound = std::chrono::milliseconds(j.value("staleness_bound_ms", std::int64_t{0}));
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigInvalid, std::string("adapter: ") + e.what());
    }
}

namespace {

class SystemClock final : public Clock {
public:
    time_point now() override { return std::chrono::system_clock::now(); }
    void sleep_until(time_point t) override { std::this_thread::sleep_until(t); }
};

std::uint64_t parse_u64(std::string_view s)
{
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw Error(Errc::ParseFailure, "not an integer: " + std::string(s));
    return v;
}

} // namespace

std::shared_ptr<Clock> system_clock()
{
    static auto clock = std::make_shared<SystemClock>();
    return clock;
}

QuotaSnapshot parse_quota_line(std::string_view line)
{
    static const std::regex re(R"(^\s*remaining_bytes=(\d+)\s+granularity_bytes=(\d+)\s*$)");
    std::string text(line);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw Error(Errc::ParseFailure, "unrecognised quota line: " + text);
    QuotaSnapshot s;
    s.remaining = parse_u64(m[1].str());
    s.granularity = parse_u64(m[2].str());
    if (s.granularity == 0) throw Error(Errc::ParseFailure, "granularity 0");
    return s;
}

QuotaSnapshot parse_quota_json(std::string_view body)
{
    try {
        auto j = json::parse(body);
        QuotaSnapshot s;
        s.remaining = j.at("remaining_bytes").get<std::uint64_t>();
        s.granularity = j.at("granularity_bytes").get<std::uint64_t>();
        if (s.granularity == 0) throw Error(Errc::ParseFailure, "granularity 0");
        return s;
    } catch (const json::exception& e) {
        throw Error(Errc::ParseFailure, std::string("quota JSON: ") + e.what());
    }
}

CreditAdapter::CreditAdapter(AdapterSpec spec, std::shared_ptr<Clock> clock)
    : spec_(std::move(spec)), clock_(std::move(clock))
{
    spec_.validate();
}

std::vector<Clock::time_point> CreditAdapter::call_log() const
{
    std::lock_guard lk(mu_);
    return log_;
}

QuotaSnapshot CreditAdapter::fetch_raw()
{
    const auto& p = spec_.parameters;
    switch (spec_.kind) {
    case AdapterKind::SimulatedApi: {
        httplib::Client cli(p.at("url"));
        cli.set_connection_timeout(3);
        cli.set_read_timeout(5);
        auto res = cli.Get("/quota/" + p.at("subscriber"));
        if (!res) throw Error(Errc::SourceUnavailable, spec_.id + ": " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error(Errc::SourceUnavailable, spec_.id + ": HTTP " + std::to_string(res->status));
        return parse_quota_json(res->body);
    }
    case AdapterKind::ScriptedCommand: {
        FILE* f = ::popen(p.at("command").c_str(), "r");
        if (!f) throw Error(Errc::SourceUnavailable, spec_.id + ": cannot run command");
        std::string out;
        char buf[512];
        while (std::fgets(buf, sizeof(buf), f)) out += buf;
        int rc = ::pclose(f);
        if (rc != 0) throw Error(Errc::SourceUnavailable, spec_.id + ": command exited with " + std::to_string(rc));
        auto nl = out.find('\n');
        if (nl != std::string::npos && out.find_first_not_of(" \r\n\t", nl) != std::string::npos)
            throw Error(Errc::ParseFailure, spec_.id + ": expected a single line");
        return parse_quota_line(out);
    }
    case AdapterKind::FileWatch: {
        std::ifstream in(p.at("path"));
        if (!in) throw Error(Errc::SourceUnavailable, spec_.id + ": cannot read " + p.at("path"));
        std::string line;
        std::getline(in, line);
        return parse_quota_line(line);
    }
    }
    throw Error(Errc::SourceUnavailable, "unknown adapter kind");
}

QuotaSnapshot CreditAdapter::fetch_quota()
{
    std::lock_guard lk(mu_);
    const auto now = clock_->now();
    if (last_fetch_ && now - *last_fetch_ < spec_.min_poll_interval)
        throw Error(Errc::RateLimited, spec_.id + ": polled again within the minimum interval");
    last_fetch_ = now;
    log_.push_back(now);
    QuotaSnapshot s = fetch_raw();
    if (auto it = spec_.parameters.find("granularity_bytes"); it != spec_.parameters.end())
        s.granularity = std::max(s.granularity, parse_u64(it->second));
    s.taken_at = now;
    s.source = spec_.id;
    s.staleness_bound = spec_.staleness_bound;
    return normalize(s);
}

CreditAdapter::Settlement CreditAdapter::await_settled_quota(std::uint64_t expected_min_delta,
                                                             const QuotaSnapshot& baseline,
                                                             std::chrono::milliseconds timeout,
                                                             std::optional<Clock::time_point> traffic_finished)
{
    const auto start = clock_->now();
    const auto deadline = start + timeout;
    const auto visible_from = traffic_finished.value_or(start) + spec_.staleness_bound;
    auto interval = std::chrono::duration_cast<std::chrono::system_clock::duration>(spec_.min_poll_interval);
    const auto cap = std::chrono::duration_cast<std::chrono::system_clock::duration>(std::chrono::seconds(60));
    // Polling before the staleness bound has passed cannot settle.
    auto next = std::max(start, std::min(visible_from, deadline));
    Settlement out;
    for (;;) {
        {
            std::lock_guard lk(mu_);
            if (last_fetch_) next = std::max(next, *last_fetch_ + spec_.min_poll_interval);
        }
        clock_->sleep_until(next);
        out.snapshot = fetch_quota();
        const auto now = out.snapshot.taken_at;
        const bool enough = baseline.remaining >= out.snapshot.remaining &&
                            baseline.remaining - out.snapshot.remaining >= expected_min_delta;
        if (enough && now >= visible_from) {
            out.settled = true;
            return out;
        }
        if (now >= deadline) return out;
        if (enough) {
            next = visible_from;
        } else {
            next = now + interval;
            interval = std::min(interval * 2, cap);
        }
        next = std::min(next, deadline);
    }
}

} // namespace zr::credit
