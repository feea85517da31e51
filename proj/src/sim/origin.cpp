#include "zr/sim/origin.hpp"

#include "zr/error.hpp"
#include "zr/h3.hpp"
#include "zr/http_message.hpp"

namespace zr::sim {

namespace {

constexpr net::Millis kIdle{30000};

std::optional<std::size_t> socket_recv(int fd, std::span<std::uint8_t> buf, net::Millis timeout)
{
    if (!net::wait_readable(fd, timeout)) return std::nullopt;
    try {
        return net::recv_some(fd, buf);
    } catch (const Error&) {
        return 0;
    }
}

} // namespace

Origin::Origin(const OriginConfig& config, const tls::CertificateAuthority& ca)
{
    std::vector<std::string> names;
    for (const auto& e : config.endpoints) {
        resources_[e.resource_path] = e.resource_size;
        names.push_back(e.hostname);
    }
    if (resources_.empty()) throw Error(Errc::InvalidArgument, "origin needs at least one resource");
    const tls::Identity id = ca.issue(names);
    const net::SocketAddress any{config.bind, 0};
    try {
        if (config.serve_http) {
            http_ = std::make_unique<net::TcpServer>(any, [this](net::Socket& s) {
                http1::RequestParser parser;
                std::uint8_t buf[16384];
                for (;;) {
                    auto n = socket_recv(s.fd(), buf, kIdle);
                    if (!n || *n == 0) return;
                    parser.feed(ByteView(buf, *n));
                    while (auto req = parser.next()) net::send_all(s.fd(), http1::serialize(respond(*req)));
                }
            });
        }
        if (config.serve_https) {
            tls_ctx_ = tls::Context::server(id, {"http/1.1"});
            https_ = std::make_unique<net::TcpServer>(any, [this](net::Socket& s) {
                tls::Session session(tls_ctx_);
                const int fd = s.fd();
                tls::Stream stream(
                    session, [fd](ByteView d) { net::send_all(fd, d); },
                    [fd](std::span<std::uint8_t> b, std::chrono::milliseconds t) { return socket_recv(fd, b, t); });
                stream.handshake(net::Millis{10000});
                http1::RequestParser parser;
                for (;;) {
                    ByteVec data = stream.read(kIdle);
                    if (data.empty()) return;
                    parser.feed(data);
                    while (auto req = parser.next()) stream.write(http1::serialize(respond(*req)));
                }
            });
        }
        if (config.serve_h3) {
            h3_ctx_ = tls::Context::server(id, {"h3"});
            h3_ = std::make_unique<quic::Server>(any, h3_ctx_, [this] {
                auto parser = std::make_shared<h3::RequestParser>();
                return [this, parser](ByteView data) {
                    parser->feed(data);
                    ByteVec out;
                    while (auto req = parser->next()) append(out, h3::encode_response(respond(*req)));
                    return out;
                };
            });
        }
    } catch (const Error& e) {
        throw Error(Errc::BindFailed, std::string("origin: ") + e.what());
    }
}

Origin::~Origin() { stop(); }

void Origin::stop()
{
    if (http_) http_->stop();
    if (https_) https_->stop();
    if (h3_) h3_->stop();
}

std::optional<net::SocketAddress> Origin::listener(Protocol p) const
{
    switch (p) {
    case Protocol::Http: return http_ ? std::optional(http_->local_address()) : std::nullopt;
    case Protocol::Https: return https_ ? std::optional(https_->local_address()) : std::nullopt;
    case Protocol::Http3: return h3_ ? std::optional(h3_->local_address()) : std::nullopt;
    }
    return std::nullopt;
}

http::Response Origin::respond(const http::Request& req)
{
    ++served_;
    auto it = resources_.find(req.path);
    return http::make_static_response(req, it == resources_.end() ? std::nullopt : std::optional(it->second));
}

} // namespace zr::sim
