#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "zr/net.hpp"
#include "zr/protocol.hpp"

namespace zr::sim {

/// Exact name, or a suffix match when written as "*.example.org"
/// (matches strict subdomains only).
struct HostnamePattern {
    std::string name;
    bool suffix = false;

    static std::optional<HostnamePattern> parse(std::string_view text);
    bool matches(std::string_view host) const;
    std::string to_string() const;
    bool operator==(const HostnamePattern&) const = default;
};

struct ClassificationRule {
    std::string id;
    std::variant<net::IpPrefix, HostnamePattern> match;
    FlowClassSet applies_to = FlowClassSet::all();
    std::string pool;

    bool is_ip() const { return std::holds_alternative<net::IpPrefix>(match); }
    bool operator==(const ClassificationRule&) const = default;
};

enum class RoamingMode { NotOffered, HomeRoutedZeroRatingOn, HomeRoutedZeroRatingOff };
enum class SessionKind { Domestic, Roaming };

std::string_view to_string(RoamingMode m) noexcept;
std::optional<RoamingMode> parse_roaming_mode(std::string_view s) noexcept;
std::string_view to_string(SessionKind k) noexcept;
std::optional<SessionKind> parse_session_kind(std::string_view s) noexcept;

struct OperatorProfile {
    std::string name;
    std::vector<ClassificationRule> rules;
    std::uint64_t quota_bytes = 10 * 1024ull * 1024 * 1024;
    std::uint64_t granularity = 1;
    std::chrono::milliseconds billing_lag{0};
    RoamingMode roaming = RoamingMode::NotOffered;
    bool meter_uplink = true;
    bool meter_downlink = true;

    /// Throws Error{ConfigInvalid}.
    void validate() const;
    bool operator==(const OperatorProfile&) const = default;
};

nlohmann::json to_json(const FlowClassSet& s);
FlowClassSet flow_class_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClassificationRule& r);
ClassificationRule rule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OperatorProfile& p);
/// Throws Error{ConfigInvalid} on schema violations.
OperatorProfile profile_from_json(const nlohmann::json& j);
OperatorProfile load_profile(const std::string& path);

} // namespace zr::sim
