#include "zr/sim/profile.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "zr/error.hpp"
#include "zr/hostname_extract.hpp"

namespace zr::sim {

using nlohmann::json;

std::optional<HostnamePattern> HostnamePattern::parse(std::string_view text)
{
    HostnamePattern p;
    if (text.starts_with("*.")) {
        p.suffix = true;
        text.remove_prefix(2);
    }
    if (!dpi::is_valid_hostname(text)) return std::nullopt;
    p.name.assign(text);
    std::transform(p.name.begin(), p.name.end(), p.name.begin(), [](unsigned char c) { return std::tolower(c); });
    return p;
}

bool HostnamePattern::matches(std::string_view host) const
{
    if (!suffix) return host == name;
    return host.size() > name.size() + 1 && host.ends_with(name) && host[host.size() - name.size() - 1] == '.';
}

std::string HostnamePattern::to_string() const { return suffix ? "*." + name : name; }

std::string_view to_string(RoamingMode m) noexcept
{
    switch (m) {
    case RoamingMode::NotOffered: return "not-offered";
    case RoamingMode::HomeRoutedZeroRatingOn: return "home-routed-zero-rating-on";
    case RoamingMode::HomeRoutedZeroRatingOff: return "home-routed-zero-rating-off";
    }
    return "?";
}

std::optional<RoamingMode> parse_roaming_mode(std::string_view s) noexcept
{
    for (auto m : {RoamingMode::NotOffered, RoamingMode::HomeRoutedZeroRatingOn, RoamingMode::HomeRoutedZeroRatingOff})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

std::string_view to_string(SessionKind k) noexcept { return k == SessionKind::Domestic ? "domestic" : "roaming"; }

std::optional<SessionKind> parse_session_kind(std::string_view s) noexcept
{
    if (s == "domestic") return SessionKind::Domestic;
    if (s == "roaming") return SessionKind::Roaming;
    return std::nullopt;
}

void OperatorProfile::validate() const
{
    if (name.empty()) throw Error(Errc::ConfigInvalid, "profile name is empty");
    if (granularity == 0) throw Error(Errc::ConfigInvalid, name + ": granularity must be > 0");
    if (billing_lag.count() < 0) throw Error(Errc::ConfigInvalid, name + ": negative billing lag");
    std::set<std::string> ids;
    for (const auto& r : rules) {
        if (r.id.empty()) throw Error(Errc::ConfigInvalid, name + ": rule without id");
        if (!ids.insert(r.id).second) throw Error(Errc::ConfigInvalid, name + ": duplicate rule id " + r.id);
        if (r.applies_to.empty()) throw Error(Errc::ConfigInvalid, name + ": rule " + r.id + " applies to nothing");
    }
}

json to_json(const FlowClassSet& s)
{
    for (const char* n : {"all", "ipv4-only", "ipv6-only", "https-only", "tcp-only"})
        if (FlowClassSet::parse_named(n) == s) return n;
    json arr = json::array();
    for (auto c : s.members()) arr.push_back(c.to_string());
    return arr;
}

FlowClassSet flow_class_set_from_json(const json& j)
{
    if (j.is_string()) {
        auto s = FlowClassSet::parse_named(j.get<std::string>());
        if (!s) throw Error(Errc::ConfigInvalid, "unknown flow-class set '" + j.get<std::string>() + "'");
        return *s;
    }
    if (!j.is_array()) throw Error(Errc::ConfigInvalid, "applies_to must be a name or a list");
    FlowClassSet s;
    for (const auto& e : j) {
        auto c = e.is_string() ? FlowClass::parse(e.get<std::string>()) : std::nullopt;
        if (!c) throw Error(Errc::ConfigInvalid, "bad flow class " + e.dump());
        s.insert(*c);
    }
    return s;
}

json to_json(const ClassificationRule& r)
{
    json j{{"id", r.id}, {"applies_to", to_json(r.applies_to)}, {"pool", r.pool}};
    if (auto* p = std::get_if<net::IpPrefix>(&r.match)) j["ip_prefix"] = p->to_string();
    else j["hostname"] = std::get<HostnamePattern>(r.match).to_string();
    return j;
}

ClassificationRule rule_from_json(const json& j)
{
    if (!j.is_object()) throw Error(Errc::ConfigInvalid, "rule must be an object");
    ClassificationRule r;
    r.id = j.value("id", "");
    r.pool = j.value("pool", r.id);
    const bool has_ip = j.contains("ip_prefix"), has_host = j.contains("hostname");
    if (has_ip == has_host) throw Error(Errc::ConfigInvalid, "rule " + r.id + " needs exactly one of ip_prefix/hostname");
    if (has_ip) {
        auto p = net::IpPrefix::parse(j["ip_prefix"].get<std::string>());
        if (!p) throw Error(Errc::ConfigInvalid, "rule " + r.id + ": bad prefix");
        r.match = *p;
    } else {
        auto h = HostnamePattern::parse(j["hostname"].get<std::string>());
        if (!h) throw Error(Errc::ConfigInvalid, "rule " + r.id + ": bad hostname");
        r.match = *h;
    }
    if (j.contains("applies_to")) r.applies_to = flow_class_set_from_json(j["applies_to"]);
    return r;
}

json to_json(const OperatorProfile& p)
{
    json rules = json::array();
    for (const auto& r : p.rules) rules.push_back(to_json(r));
    return {{"name", p.name},
            {"quota_bytes", p.quota_bytes},
            {"granularity_bytes", p.granularity},
            {"billing_lag_ms", p.billing_lag.count()},
            {"roaming", std::string(to_string(p.roaming))},
            {"meter_uplink", p.meter_uplink},
            {"meter_downlink", p.meter_downlink},
            {"rules", rules}};
}

OperatorProfile profile_from_json(const json& j)
{
    try {
        OperatorProfile p;
        p.name = j.at("name").get<std::string>();
        p.quota_bytes = j.value("quota_bytes", p.quota_bytes);
        p.granularity = j.value("granularity_bytes", p.granularity);
        p.billing_lag = std::chrono::milliseconds(j.value("billing_lag_ms", std::int64_t{0}));
        auto mode = parse_roaming_mode(j.value("roaming", std::string("not-offered")));
        if (!mode) throw Error(Errc::ConfigInvalid, p.name + ": unknown roaming mode");
        p.roaming = *mode;
        p.meter_uplink = j.value("meter_uplink", true);
        p.meter_downlink = j.value("meter_downlink", true);
        for (const auto& r : j.value("rules", json::array())) p.rules.push_back(rule_from_json(r));
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigInvalid, std::string("profile: ") + e.what());
    }
}

OperatorProfile load_profile(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(Errc::ConfigInvalid, "cannot open " + path);
    try {
        return profile_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::ConfigInvalid, path + ": " + e.what());
    }
}

} // namespace zr::sim
