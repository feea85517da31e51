#pragma once

// Uniform remaining-quota retrieval with a hard poll-rate floor.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zr/quota.hpp"

namespace zr::credit {

enum class AdapterKind { SimulatedApi, ScriptedCommand, FileWatch };

std::string_view to_string(AdapterKind k) noexcept;
std::optional<AdapterKind> parse_adapter_kind(std::string_view s) noexcept;

/// Parameters by kind:
///   SimulatedApi     url (control API base), subscriber
///   ScriptedCommand  command (run through /bin/sh)
///   FileWatch        path
/// Any kind: granularity_bytes (coarsens the reported granularity).
struct AdapterSpec {
    std::string id = "adapter";
    AdapterKind kind = AdapterKind::SimulatedApi;
    std::map<std::string, std::string> parameters;
    std::chrono::milliseconds min_poll_interval{1000};
    /// Longest billing-record lag the source exhibits.
    std::chrono::milliseconds staleness_bound{0};

    /// Throws Error{ConfigInvalid}; min_poll_interval must be at least 1 s.
    void validate() const;
};

nlohmann::json to_json(const AdapterSpec& s);
AdapterSpec adapter_from_json(const nlohmann::json& j);

class Clock {
public:
    using time_point = std::chrono::system_clock::time_point;
    virtual ~Clock() = default;
    virtual time_point now() = 0;
    virtual void sleep_until(time_point t) = 0;
};

std::shared_ptr<Clock> system_clock();

/// "remaining_bytes=<N> granularity_bytes=<G>"; throws Error{ParseFailure}.
QuotaSnapshot parse_quota_line(std::string_view line);
/// {"remaining_bytes":N,"granularity_bytes":G}; throws Error{ParseFailure}.
QuotaSnapshot parse_quota_json(std::string_view body);

class CreditAdapter {
public:
    explicit CreditAdapter(AdapterSpec spec, std::shared_ptr<Clock> clock = system_clock());

    /// Throws Error{RateLimited} when called within min_poll_interval of the
    /// previous fetch, Error{SourceUnavailable}, Error{ParseFailure}.
    QuotaSnapshot fetch_quota();

    struct Settlement {
        QuotaSnapshot snapshot;
        bool settled = false;
    };
    /// Polls with x2 backoff (from min_poll_interval, capped at 60 s) until
    /// baseline.remaining - current >= expected_min_delta and the source's
    /// staleness bound has elapsed since `traffic_finished`, or until the
    /// timeout. Never polls faster than min_poll_interval.
    Settlement await_settled_quota(std::uint64_t expected_min_delta, const QuotaSnapshot& baseline,
                                   std::chrono::milliseconds timeout,
                                   std::optional<Clock::time_point> traffic_finished = std::nullopt);

    const AdapterSpec& spec() const { return spec_; }
    std::vector<Clock::time_point> call_log() const;

private:
    QuotaSnapshot fetch_raw();

    AdapterSpec spec_;
    std::shared_ptr<Clock> clock_;
    mutable std::mutex mu_;
    std::optional<Clock::time_point> last_fetch_;
    std::vector<Clock::time_point> log_;
};

} // namespace zr::credit
