#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "zr/server.hpp"
#include "zr/sim/classifier.hpp"
#include "zr/sim/meter.hpp"
#include "zr/sim/profile.hpp"
#include "zr/transport.hpp"

namespace zr::sim {

/// One SIM: its profile, current session kind and quota meter.
class Subscriber {
public:
    explicit Subscriber(OperatorProfile profile);

    /// Replaces the profile and resets the meter to the profile's quota.
    void load_profile(OperatorProfile profile);
    OperatorProfile profile() const;
    void set_session(SessionKind kind);
    SessionKind session() const;
    Classification classify(const FlowInfo& flow, SessionKind* session_out = nullptr) const;

    Meter& meter() { return meter_; }
    const Meter& meter() const { return meter_; }

private:
    mutable std::mutex mu_;
    OperatorProfile profile_;
    SessionKind session_ = SessionKind::Domestic;
    Meter meter_;
};

struct GatewayConfig {
    net::SocketAddress tcp_bind{net::IpAddress::loopback(net::IpVersion::V4), 0};
    net::SocketAddress udp_bind{net::IpAddress::loopback(net::IpVersion::V4), 0};
    /// Virtual destination to origin listener translation.
    transport::DialMap routes;
    std::chrono::seconds udp_idle{120};
};

/// Transparent relay that classifies and meters every flow it carries.
class Gateway {
public:
    /// Throws Error{BindFailed}.
    Gateway(GatewayConfig config, Subscriber& subscriber);
    ~Gateway();

    net::SocketAddress tcp_address() const { return tcp_->local_address(); }
    net::SocketAddress udp_address() const { return udp_local_; }
    transport::Route route() const { return transport::Route::gateway(tcp_address(), udp_address()); }
    void stop();

private:
    struct UdpFlow;
    void handle_tcp(net::Socket& client);
    void udp_loop();

    GatewayConfig config_;
    Subscriber& subscriber_;
    std::unique_ptr<net::TcpServer> tcp_;
    net::Socket udp_;
    net::SocketAddress udp_local_;
    std::atomic<bool> stop_{false};
    std::thread udp_thread_;
};

} // namespace zr::sim
