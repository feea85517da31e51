#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zr/bytes.hpp"
#include "zr/sim/profile.hpp"

namespace zr::sim {

struct FlowInfo {
    FlowClass flow_class;
    net::IpAddress destination;
    std::optional<std::string> hostname;
};

struct Classification {
    std::optional<std::string> rule_id;
    std::optional<std::string> pool;
    bool billed() const { return !pool.has_value(); }
};

/// First matching rule wins; zero-rated iff some rule matches and applies to
/// the flow class, and the session permits zero-rating.
Classification classify_flow(const OperatorProfile& profile, SessionKind session, const FlowInfo& flow);

/// Watches the client-to-server direction of one flow until it can be
/// classified. Only the first kInspectLimit bytes are examined.
class FlowInspector {
public:
    static constexpr std::size_t kInspectLimit = 8 * 1024;

    FlowInspector(Transport transport, net::IpVersion version) : transport_(transport), version_(version) {}

    /// A TCP stream chunk or one UDP datagram payload.
    void client_bytes(ByteView data);
    /// True once a hostname was found or the inspection budget is spent.
    bool done() const { return hostname_.has_value() || seen_ >= kInspectLimit; }

    Protocol protocol() const;
    FlowClass flow_class() const { return {protocol(), version_}; }
    const std::optional<std::string>& hostname() const { return hostname_; }

private:
    Transport transport_;
    net::IpVersion version_;
    std::size_t seen_ = 0;
    ByteVec stream_;
    std::vector<ByteVec> datagrams_;
    std::optional<std::string> hostname_;
};

} // namespace zr::sim
