#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zr/endpoint.hpp"
#include "zr/http_message.hpp"
#include "zr/quic_lite.hpp"
#include "zr/server.hpp"
#include "zr/tls.hpp"

namespace zr::sim {

struct OriginConfig {
    std::vector<EndpointSpec> endpoints;
    bool serve_http = true;
    bool serve_https = true;
    bool serve_h3 = true;
    net::IpAddress bind = net::IpAddress::loopback(net::IpVersion::V4);
};

/// Static-resource web server for HTTP, HTTPS and HTTP/3 on ephemeral ports.
/// Any Host / SNI is accepted; the certificate covers every configured host.
class Origin {
public:
    /// Throws Error{BindFailed}.
    Origin(const OriginConfig& config, const tls::CertificateAuthority& ca);
    ~Origin();

    std::optional<net::SocketAddress> listener(Protocol p) const;
    std::uint64_t requests_served() const { return served_; }
    void stop();

private:
    http::Response respond(const http::Request& req);

    std::map<std::string, std::uint64_t> resources_;
    std::shared_ptr<tls::Context> tls_ctx_;
    std::shared_ptr<tls::Context> h3_ctx_;
    std::unique_ptr<net::TcpServer> http_;
    std::unique_ptr<net::TcpServer> https_;
    std::unique_ptr<quic::Server> h3_;
    std::atomic<std::uint64_t> served_{0};
};

} // namespace zr::sim
