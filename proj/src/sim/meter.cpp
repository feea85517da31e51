#include "zr/sim/meter.hpp"

namespace zr::sim {

using nlohmann::json;

json to_json(const FlowRecord& f)
{
    json j{{"id", f.id},
           {"client", f.client.to_string()},
           {"destination", f.destination.to_string()},
           {"transport", f.transport == Transport::Tcp ? "tcp" : "udp"},
           {"flow_class", f.flow_class.to_string()},
           {"session", std::string(to_string(f.session))},
           {"bytes_up", f.bytes_up},
           {"bytes_down", f.bytes_down},
           {"bytes_metered", f.bytes_metered},
           {"billed", f.billed},
           {"classified", f.classified}};
    j["extracted_hostname"] = f.extracted_hostname ? json(*f.extracted_hostname) : json(nullptr);
    j["matched_rule"] = f.matched_rule ? json(*f.matched_rule) : json(nullptr);
    j["pool"] = f.pool ? json(*f.pool) : json(nullptr);
    return j;
}

Meter::Meter(std::uint64_t quota, std::uint64_t granularity, std::chrono::milliseconds lag, Now now)
    : now_(std::move(now)), quota_(quota), granularity_(granularity ? granularity : 1), lag_(lag)
{
}

void Meter::reset(std::uint64_t quota, std::uint64_t granularity, std::chrono::milliseconds lag)
{
    std::lock_guard lk(mu_);
    quota_ = quota;
    granularity_ = granularity ? granularity : 1;
    lag_ = lag;
    totals_ = {};
    billable_total_ = 0;
    visible_billable_ = 0;
    pending_.clear();
    flows_.clear();
}

void Meter::set_meter_directions(bool uplink, bool downlink)
{
    std::lock_guard lk(mu_);
    meter_up_ = uplink;
    meter_down_ = downlink;
}

std::uint64_t Meter::open_flow(FlowRecord record)
{
    std::lock_guard lk(mu_);
    record.id = next_id_++;
    // Bounded history for the flows endpoint.
    if (flows_.size() >= 20000) flows_.erase(flows_.begin());
    flows_[record.id] = record;
    return record.id;
}

void Meter::classify(std::uint64_t flow, const FlowInfo& info, const Classification& c, SessionKind session)
{
    std::lock_guard lk(mu_);
    auto it = flows_.find(flow);
    if (it == flows_.end()) return;
    FlowRecord& f = it->second;
    f.flow_class = info.flow_class;
    f.extracted_hostname = info.hostname;
    f.matched_rule = c.rule_id;
    f.pool = c.pool;
    f.billed = c.billed();
    f.session = session;
    f.classified = true;
}

void Meter::charge(std::uint64_t flow, std::uint64_t bytes, bool upstream)
{
    if (bytes == 0) return;
    std::lock_guard lk(mu_);
    auto it = flows_.find(flow);
    if (it == flows_.end()) return;
    FlowRecord& f = it->second;
    (upstream ? f.bytes_up : f.bytes_down) += bytes;
    if (upstream ? !meter_up_ : !meter_down_) return;
    f.bytes_metered += bytes;
    totals_.metered += bytes;
    if (f.pool) {
        totals_.pools[*f.pool] += bytes;
        return;
    }
    const std::uint64_t before = billable_total_;
    billable_total_ += bytes;
    const std::uint64_t within = before >= quota_ ? 0 : std::min(bytes, quota_ - before);
    totals_.billed += within;
    totals_.overdraft += bytes - within;
    const auto now = now_();
    if (!pending_.empty() && now - pending_.back().first < std::chrono::milliseconds(1)) pending_.back().second += bytes;
    else pending_.emplace_back(now, bytes);
}

void Meter::settle_locked() const
{
    const auto cutoff = now_() - lag_;
    while (!pending_.empty() && pending_.front().first <= cutoff) {
        visible_billable_ += pending_.front().second;
        pending_.pop_front();
    }
}

std::uint64_t Meter::visible_remaining() const
{
    std::lock_guard lk(mu_);
    settle_locked();
    std::uint64_t rem = visible_billable_ >= quota_ ? 0 : quota_ - visible_billable_;
    return rem - rem % granularity_;
}

std::uint64_t Meter::true_remaining() const
{
    std::lock_guard lk(mu_);
    return billable_total_ >= quota_ ? 0 : quota_ - billable_total_;
}

std::uint64_t Meter::granularity() const
{
    std::lock_guard lk(mu_);
    return granularity_;
}

Meter::Totals Meter::totals() const
{
    std::lock_guard lk(mu_);
    return totals_;
}

std::vector<FlowRecord> Meter::flows() const
{
    std::lock_guard lk(mu_);
    std::vector<FlowRecord> out;
    out.reserve(flows_.size());
    for (const auto& [id, f] : flows_) out.push_back(f);
    return out;
}

} // namespace zr::sim
