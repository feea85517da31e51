#pragma once

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "zr/endpoint.hpp"
#include "zr/sim/gateway.hpp"
#include "zr/sim/origin.hpp"
#include "zr/sim/profile.hpp"
#include "zr/tls.hpp"

namespace httplib {
class Server;
}

namespace zr::sim {

struct SimulatorConfig {
    OperatorProfile profile;
    std::string subscriber_id = "sim-1";
    /// Hosted endpoints; each of their addresses is routed to the origin.
    std::vector<EndpointSpec> endpoints;
    bool origin_udp = true;
    net::SocketAddress control_listen{net::IpAddress::loopback(net::IpVersion::V4), 0};
    net::SocketAddress gateway_tcp{net::IpAddress::loopback(net::IpVersion::V4), 0};
    net::SocketAddress gateway_udp{net::IpAddress::loopback(net::IpVersion::V4), 0};

    /// Built-in endpoints plus the control endpoint.
    static SimulatorConfig with_builtin_endpoints(OperatorProfile profile);
};

/// Origin + metering gateway + control API for one subscriber.
///
/// Control API (JSON over HTTP):
///   GET  /quota/<id>   {"remaining_bytes":N,"granularity_bytes":G}
///   GET  /flows        flow records
///   PUT  /profile      load an operator profile (resets the meter)
///   GET  /profile      current profile
///   POST /session      {"kind":"domestic"|"roaming"}
///   GET  /info         gateway addresses, subscriber id, CA certificate
///   GET  /totals       meter totals (metered, billed, overdraft, pools)
class Simulator {
public:
    explicit Simulator(SimulatorConfig config);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    transport::Route route() const { return gateway_->route(); }
    /// Destination translation for relays that must reach the origin.
    const transport::DialMap& dial_map() const { return routes_; }
    std::string control_url() const;
    const std::string& subscriber_id() const { return config_.subscriber_id; }
    const std::string& ca_pem() const { return ca_.root.cert_pem; }
    Subscriber& subscriber() { return subscriber_; }
    Origin& origin() { return *origin_; }
    void stop();

private:
    SimulatorConfig config_;
    tls::CertificateAuthority ca_;
    Subscriber subscriber_;
    std::unique_ptr<Origin> origin_;
    transport::DialMap routes_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<httplib::Server> http_;
    int control_port_ = 0;
    std::thread http_thread_;
};

} // namespace zr::sim
