#include "zr/sim/classifier.hpp"

#include "zr/hostname_extract.hpp"

namespace zr::sim {

Classification classify_flow(const OperatorProfile& profile, SessionKind session, const FlowInfo& flow)
{
    if (session == SessionKind::Roaming && profile.roaming != RoamingMode::HomeRoutedZeroRatingOn) return {};
    for (const auto& rule : profile.rules) {
        if (!rule.applies_to.contains(flow.flow_class)) continue;
        bool hit = false;
        if (auto* prefix = std::get_if<net::IpPrefix>(&rule.match)) hit = prefix->contains(flow.destination);
        else if (flow.hostname) hit = std::get<HostnamePattern>(rule.match).matches(*flow.hostname);
        if (hit) return {rule.id, rule.pool};
    }
    return {};
}

Protocol FlowInspector::protocol() const
{
    if (transport_ == Transport::Udp) return Protocol::Http3;
    if (!stream_.empty() && stream_[0] == 0x16 && (stream_.size() < 2 || stream_[1] == 0x03)) return Protocol::Https;
    return Protocol::Http;
}

void FlowInspector::client_bytes(ByteView data)
{
    if (done() || data.empty()) return;
    const std::size_t take = std::min(data.size(), kInspectLimit - seen_);
    seen_ += take;
    if (transport_ == Transport::Udp) {
        datagrams_.emplace_back(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(take));
        hostname_ = dpi::extract_quic_sni(std::span<const ByteVec>(datagrams_));
    } else {
        append(stream_, data.first(take));
        hostname_ = dpi::extract_hostname(protocol(), stream_);
    }
}

} // namespace zr::sim
