#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zr/net.hpp"
#include "zr/sim/classifier.hpp"

namespace zr::sim {

struct FlowRecord {
    std::uint64_t id = 0;
    net::SocketAddress client;
    net::SocketAddress destination;
    Transport transport = Transport::Tcp;
    FlowClass flow_class;
    std::optional<std::string> extracted_hostname;
    std::optional<std::string> matched_rule;
    std::optional<std::string> pool;
    SessionKind session = SessionKind::Domestic;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    std::uint64_t bytes_metered = 0;
    bool billed = true;
    bool classified = false;
};

nlohmann::json to_json(const FlowRecord& f);

/// Quota accounting for one subscriber. Billable bytes become visible through
/// visible_remaining() only after the billing lag; the sim never blocks
/// traffic, bytes past the quota go to the overdraft counter.
class Meter {
public:
    using Clock = std::chrono::steady_clock;
    using Now = std::function<Clock::time_point()>;

    explicit Meter(std::uint64_t quota = 0, std::uint64_t granularity = 1,
                   std::chrono::milliseconds lag = std::chrono::milliseconds{0}, Now now = Clock::now);

    void reset(std::uint64_t quota, std::uint64_t granularity, std::chrono::milliseconds lag);

    std::uint64_t open_flow(FlowRecord record);
    /// Records a classification decision for a flow.
    void classify(std::uint64_t flow, const FlowInfo& info, const Classification& c, SessionKind session);
    /// Meters `bytes` of a classified flow. `upstream` is client-to-server.
    void charge(std::uint64_t flow, std::uint64_t bytes, bool upstream);

    /// Reported quota: lagged and floored to the granularity.
    std::uint64_t visible_remaining() const;
    std::uint64_t true_remaining() const;
    std::uint64_t granularity() const;

    struct Totals {
        std::uint64_t metered = 0;
        std::uint64_t billed = 0;    // charged against the quota
        std::uint64_t overdraft = 0; // billable bytes beyond the quota
        std::map<std::string, std::uint64_t> pools;
    };
    Totals totals() const;
    std::vector<FlowRecord> flows() const;

    void set_meter_directions(bool uplink, bool downlink);

private:
    void settle_locked() const;

    mutable std::mutex mu_;
    Now now_;
    std::uint64_t quota_;
    std::uint64_t granularity_;
    std::chrono::milliseconds lag_;
    bool meter_up_ = true;
    bool meter_down_ = true;
    Totals totals_;
    std::uint64_t billable_total_ = 0;
    mutable std::uint64_t visible_billable_ = 0;
    mutable std::deque<std::pair<Clock::time_point, std::uint64_t>> pending_;
    std::uint64_t next_id_ = 1;
    std::map<std::uint64_t, FlowRecord> flows_;
};

} // namespace zr::sim
