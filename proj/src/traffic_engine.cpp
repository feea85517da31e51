#include "zr/traffic_engine.hpp"

#include <netdb.h>
#include <sys/socket.h>

#include <algorithm>
#include <charconv>

#include "zr/error.hpp"
#include "zr/h3.hpp"
#include "zr/quic_lite.hpp"
#include "zr/tls.hpp"

namespace zr::engine {

std::string_view to_string(Experiment e) noexcept
{
    switch (e) {
    case Experiment::Verify: return "verify";
    case Experiment::IpProbe: return "ip-probe";
    case Experiment::HostProbe: return "host-probe";
    }
    return "?";
}

std::optional<Experiment> parse_experiment(std::string_view s) noexcept
{
    for (auto e : kAllExperiments)
        if (s == to_string(e)) return e;
    return std::nullopt;
}

TrafficRecipe TrafficRecipe::verify(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target)
{
    return {Experiment::Verify, e, p, v, target, e.hostname, std::nullopt, std::nullopt};
}

TrafficRecipe TrafficRecipe::ip_probe(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target,
                                      const std::string& dummy_hostname)
{
    return {Experiment::IpProbe, e, p, v, target, dummy_hostname, std::nullopt, std::nullopt};
}

TrafficRecipe TrafficRecipe::host_probe(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target,
                                        const net::IpAddress& relay, std::optional<std::uint16_t> relay_port)
{
    return {Experiment::HostProbe, e, p, v, target, e.hostname, relay, relay_port};
}

void TrafficRecipe::validate(const std::string& dummy_hostname) const
{
    switch (experiment) {
    case Experiment::Verify:
        if (presented_hostname != endpoint.hostname || destination_override)
            throw Error(Errc::InvalidArgument, "verify recipes present the real hostname to the real address");
        break;
    case Experiment::IpProbe:
        if (presented_hostname != dummy_hostname || destination_override)
            throw Error(Errc::InvalidArgument, "ip-probe recipes present the dummy hostname to the real address");
        break;
    case Experiment::HostProbe:
        if (presented_hostname != endpoint.hostname || !destination_override)
            throw Error(Errc::InvalidArgument, "host-probe recipes present the real hostname to the relay");
        if (destination_override->version() != ip_version)
            throw Error(Errc::InvalidArgument, "relay address family does not match the recipe");
        break;
    }
    if (!endpoint.supports(protocol))
        throw Error(Errc::ProtocolUnsupported, endpoint.hostname + " does not serve " + std::string(to_string(protocol)));
}

// ---------------------------------------------------------------- resolver

PinHandle& PinHandle::operator=(PinHandle&& o) noexcept
{
    if (this != &o) {
        release();
        resolver_ = o.resolver_;
        token_ = o.token_;
        o.resolver_ = nullptr;
    }
    return *this;
}

void PinHandle::release()
{
    if (resolver_) resolver_->unpin(token_);
    resolver_ = nullptr;
}

PinHandle Resolver::pin(const std::string& hostname, const net::IpAddress& address)
{
    std::lock_guard lk(mu_);
    const auto token = next_token_++;
    pins_[hostname].emplace_back(token, address);
    return PinHandle(this, token);
}

void Resolver::unpin(std::uint64_t token)
{
    std::lock_guard lk(mu_);
    for (auto it = pins_.begin(); it != pins_.end(); ++it) {
        auto& v = it->second;
        auto pos = std::find_if(v.begin(), v.end(), [&](const auto& p) { return p.first == token; });
        if (pos != v.end()) {
            v.erase(pos);
            if (v.empty()) pins_.erase(it);
            return;
        }
    }
}

std::vector<net::IpAddress> Resolver::resolve(const std::string& hostname, net::IpVersion v,
                                              const EndpointSpec* configured)
{
    {
        std::lock_guard lk(mu_);
        ++lookups_;
        if (auto it = pins_.find(hostname); it != pins_.end()) {
            // Latest pin of the requested family wins.
            for (auto p = it->second.rbegin(); p != it->second.rend(); ++p)
                if (p->second.version() == v) return {p->second};
        }
    }
    if (configured && configured->hostname == hostname) {
        const auto& addrs = configured->addresses(v);
        if (!addrs.empty()) return addrs;
    }
    addrinfo hints{};
    hints.ai_family = v == net::IpVersion::V4 ? AF_INET : AF_INET6;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::vector<net::IpAddress> out;
    if (::getaddrinfo(hostname.c_str(), nullptr, &hints, &res) == 0) {
        for (auto* ai = res; ai; ai = ai->ai_next) {
            auto sa = net::SocketAddress::from_sockaddr(ai->ai_addr);
            if (std::find(out.begin(), out.end(), sa.ip) == out.end()) out.push_back(sa.ip);
        }
        ::freeaddrinfo(res);
    }
    return out;
}

// ---------------------------------------------------------------- connections

class TrafficEngine::Connection {
public:
    virtual ~Connection() = default;
    virtual http::Response exchange(const http::Request& req, net::Millis timeout) = 0;
    virtual std::uint64_t sent() const = 0;
    virtual std::uint64_t received() const = 0;
    virtual void close() = 0;
    virtual std::string protocol() const = 0;
};

namespace {

class PlainConnection final : public TrafficEngine::Connection {
public:
    explicit PlainConnection(transport::StreamChannel ch) : ch_(std::move(ch)) {}

    http::Response exchange(const http::Request& req, net::Millis timeout) override
    {
        ch_.send(http1::serialize(req));
        std::uint8_t buf[32768];
        for (;;) {
            if (auto r = parser_.next()) return *r;
            auto n = ch_.recv(buf, timeout);
            if (!n) throw Error(Errc::Timeout, "HTTP response timed out");
            if (*n == 0) throw Error(Errc::IoFailure, "connection closed");
            parser_.feed(ByteView(buf, *n));
        }
    }
    std::uint64_t sent() const override { return ch_.bytes_sent(); }
    std::uint64_t received() const override { return ch_.bytes_received(); }
    void close() override { ch_.close(); }
    std::string protocol() const override { return "http/1.1"; }

private:
    transport::StreamChannel ch_;
    http1::ResponseParser parser_;
};

class TlsConnection final : public TrafficEngine::Connection {
public:
    TlsConnection(transport::StreamChannel ch, std::shared_ptr<tls::Context> ctx, net::Millis timeout)
        : ch_(std::move(ch)), session_(std::move(ctx)),
          stream_(
              session_, [this](ByteView d) { ch_.send(d); },
              [this](std::span<std::uint8_t> b, std::chrono::milliseconds t) { return ch_.recv(b, t); })
    {
        try {
            stream_.handshake(timeout);
        } catch (const Error& e) {
            if (e.code() == Errc::Timeout) throw Error(Errc::ConnectFailed, e.what());
            throw;
        }
    }

    http::Response exchange(const http::Request& req, net::Millis timeout) override
    {
        stream_.write(http1::serialize(req));
        for (;;) {
            if (auto r = parser_.next()) return *r;
            ByteVec data = stream_.read(timeout);
            if (data.empty()) throw Error(Errc::Timeout, "HTTPS response timed out");
            parser_.feed(data);
        }
    }
    std::uint64_t sent() const override { return ch_.bytes_sent(); }
    std::uint64_t received() const override { return ch_.bytes_received(); }
    void close() override { ch_.close(); }
    std::string protocol() const override
    {
        auto a = session_.negotiated_alpn();
        return a.empty() ? "http/1.1+tls" : a + "+tls";
    }

private:
    transport::StreamChannel ch_;
    tls::Session session_;
    tls::Stream stream_;
    http1::ResponseParser parser_;
};

class H3Connection final : public TrafficEngine::Connection {
public:
    explicit H3Connection(std::unique_ptr<quic::ClientConnection> c) : conn_(std::move(c)) {}
    ~H3Connection() override { close(); }

    http::Response exchange(const http::Request& req, net::Millis timeout) override
    {
        conn_->write(h3::encode_request(req));
        for (;;) {
            if (auto r = parser_.next()) return *r;
            ByteVec data = conn_->read(timeout);
            if (data.empty()) throw Error(Errc::Timeout, "HTTP/3 response timed out");
            parser_.feed(data);
        }
    }
    std::uint64_t sent() const override { return conn_->channel().bytes_sent(); }
    std::uint64_t received() const override { return conn_->channel().bytes_received(); }
    void close() override { conn_->close(); }
    std::string protocol() const override { return conn_->alpn(); }

private:
    std::unique_ptr<quic::ClientConnection> conn_;
    h3::ResponseParser parser_;
};

/// Exchange overhead as a function of body size: fixed + rate * body.
struct OverheadModel {
    double rate = 0;
    std::optional<std::pair<std::uint64_t, std::uint64_t>> small; // (body, overhead)
    std::optional<std::pair<std::uint64_t, std::uint64_t>> large;

    static double prior_rate(Protocol p)
    {
        switch (p) {
        case Protocol::Http: return 0.0;
        case Protocol::Https: return 22.0 / 16384;
        case Protocol::Http3: return 0.0135;
        }
        return 0;
    }
    static std::uint64_t prior_fixed(Protocol p) { return p == Protocol::Http ? 220 : p == Protocol::Https ? 260 : 300; }

    void observe(std::uint64_t body, std::uint64_t overhead)
    {
        auto& slot = body >= 4096 ? large : small;
        slot = std::make_pair(body, overhead);
        if (small && large && large->first > small->first + 4096) {
            double r = (static_cast<double>(large->second) - static_cast<double>(small->second)) /
                       static_cast<double>(large->first - small->first);
            if (r >= 0 && r < 0.1) rate = r;
        }
    }

    /// Body bytes that make an exchange cost about `budget` bytes.
    std::uint64_t body_for(std::uint64_t budget, Protocol p, std::optional<std::pair<std::uint64_t, std::uint64_t>> last) const
    {
        double fixed = static_cast<double>(prior_fixed(p));
        if (last) fixed = static_cast<double>(last->second) - rate * static_cast<double>(last->first);
        double body = (static_cast<double>(budget) - fixed) / (1.0 + rate);
        return body < 1 ? 1 : static_cast<std::uint64_t>(body);
    }
};

std::optional<std::uint64_t> content_range_total(const http::Response& r)
{
    auto cr = r.header("content-range");
    if (!cr) return std::nullopt;
    auto slash = cr->rfind('/');
    if (slash == std::string::npos) return std::nullopt;
    std::uint64_t v = 0;
    auto s = std::string_view(*cr).substr(slash + 1);
    if (std::from_chars(s.data(), s.data() + s.size(), v).ec != std::errc{}) return std::nullopt;
    return v;
}

} // namespace

TrafficEngine::TrafficEngine(EngineOptions options) : options_(std::move(options)) {}
TrafficEngine::~TrafficEngine() = default;

PinHandle TrafficEngine::pin_hostname(const std::string& hostname, const net::IpAddress& address)
{
    return resolver_.pin(hostname, address);
}

net::SocketAddress TrafficEngine::destination(const TrafficRecipe& recipe, TrafficReport& report)
{
    net::SocketAddress dest;
    dest.port = recipe.port_override.value_or(default_port(recipe.protocol));
    if (recipe.destination_override) {
        dest.ip = *recipe.destination_override;
        return dest;
    }
    auto addrs = resolver_.resolve(recipe.endpoint.hostname, recipe.ip_version, &recipe.endpoint);
    ++report.dns_lookups;
    if (addrs.empty())
        throw Error(Errc::ConnectFailed, recipe.endpoint.hostname + " has no " +
                                             std::string(net::to_string(recipe.ip_version)) + " address");
    dest.ip = addrs.front();
    return dest;
}

std::unique_ptr<TrafficEngine::Connection> TrafficEngine::open(const TrafficRecipe& recipe,
                                                               const net::SocketAddress& dest, TrafficReport& report)
{
    ++report.connections;
    const bool verify = recipe.experiment == Experiment::Verify;
    switch (recipe.protocol) {
    case Protocol::Http:
        return std::make_unique<PlainConnection>(transport::StreamChannel::connect(options_.route, dest));
    case Protocol::Https: {
        tls::ClientOptions o;
        o.server_name = recipe.presented_hostname;
        o.verify_peer = verify;
        o.trust_pem = verify ? options_.trust_pem : "";
        o.alpn = {"http/1.1"};
        return std::make_unique<TlsConnection>(transport::StreamChannel::connect(options_.route, dest),
                                               tls::Context::client(o), options_.io_timeout);
    }
    case Protocol::Http3: {
        tls::ClientOptions o;
        o.server_name = recipe.presented_hostname;
        o.verify_peer = verify;
        o.trust_pem = verify ? options_.trust_pem : "";
        o.alpn = {"h3"};
        o.tls13_only = true;
        auto ctx = tls::Context::client(o);
        std::string last_error;
        const unsigned attempts = std::max(1u, options_.h3_retry_cap);
        for (unsigned i = 0; i < attempts; ++i) {
            auto ch = transport::DatagramChannel::open(options_.route, dest);
            quic::AttemptBytes spent;
            try {
                auto conn = quic::ClientConnection::connect(std::move(ch), ctx, net::Millis{3000}, &spent);
                auto h = std::make_unique<H3Connection>(std::move(conn));
                return h;
            } catch (const Error& e) {
                // A failed attempt still put datagrams on the path; they are metered there.
                report.bytes_sent += spent.sent;
                report.bytes_received += spent.received;
                last_error = e.what();
                report.warnings.push_back("HTTP/3 attempt " + std::to_string(i + 1) + " failed: " + e.what());
            }
        }
        throw Error(Errc::ProtocolUnsupported, "HTTP/3 connection failed: " + last_error);
    }
    }
    throw Error(Errc::ProtocolUnsupported, "unknown protocol");
}

TrafficReport TrafficEngine::run_recipe(const TrafficRecipe& recipe)
{
    recipe.validate(options_.dummy_hostname);
    TrafficReport report;
    report.started = std::chrono::system_clock::now();
    if (recipe.target_bytes == 0) {
        report.finished = report.started;
        return report;
    }
    const net::SocketAddress dest = destination(recipe, report);

    std::uint64_t closed_sent = 0, closed_received = 0;
    std::unique_ptr<Connection> conn;
    auto totals = [&] {
        return std::make_pair(report.bytes_sent + closed_sent + (conn ? conn->sent() : 0),
                              report.bytes_received + closed_received + (conn ? conn->received() : 0));
    };
    auto retire = [&] {
        if (!conn) return;
        conn->close();
        closed_sent += conn->sent();
        closed_received += conn->received();
        conn.reset();
    };

    OverheadModel model;
    model.rate = OverheadModel::prior_rate(recipe.protocol);
    std::optional<std::pair<std::uint64_t, std::uint64_t>> last_sample;
    std::optional<std::uint64_t> resource_len;
    bool warned = false;
    unsigned reconnects = 0;

    try {
        for (;;) {
            auto [s, r] = totals();
            if (s + r >= recipe.target_bytes) break;
            if (!conn) {
                conn = open(recipe, dest, report);
                report.protocol_used = conn->protocol();
                std::tie(s, r) = totals();
                if (s + r >= recipe.target_bytes) break;
            }
            http::Request req;
            req.path = recipe.endpoint.resource_path;
            req.authority = recipe.presented_hostname;
            if (options_.range_trim) {
                const std::uint64_t budget = recipe.target_bytes - (s + r) + options_.overshoot_margin;
                std::uint64_t want = model.body_for(budget, recipe.protocol, last_sample);
                if (resource_len) want = std::min(want, *resource_len);
                req.range = http::ByteRange{0, want - 1};
            }
            http::Response resp;
            try {
                resp = conn->exchange(req, options_.io_timeout);
            } catch (const Error& e) {
                if (e.code() != Errc::IoFailure || ++reconnects > 3) throw;
                retire(); // server closed a kept-alive connection; reconnect
                continue;
            }
            ++report.request_count;
            auto [s2, r2] = totals();
            const std::uint64_t exchange = (s2 + r2) - (s + r);
            if (resp.status >= 200 && resp.status < 300) {
                const std::uint64_t overhead = exchange > resp.body.size() ? exchange - resp.body.size() : 0;
                model.observe(resp.body.size(), overhead);
                last_sample = std::make_pair<std::uint64_t, std::uint64_t>(resp.body.size(), std::uint64_t{overhead});
                if (auto total = content_range_total(resp)) resource_len = *total;
                else if (resp.status == 200) resource_len = resp.body.size();
            } else if (!warned) {
                warned = true;
                report.warnings.push_back("ResourceMissing: HTTP " + std::to_string(resp.status) + " for " +
                                          recipe.endpoint.resource_path);
            }
        }
    } catch (...) {
        retire();
        report.bytes_sent += closed_sent;
        report.bytes_received += closed_received;
        throw;
    }
    retire();
    report.bytes_sent += closed_sent;
    report.bytes_received += closed_received;
    report.bytes_total = report.bytes_sent + report.bytes_received;
    report.finished = std::chrono::system_clock::now();
    return report;
}

FetchResult TrafficEngine::fetch_once(const TrafficRecipe& recipe)
{
    recipe.validate(options_.dummy_hostname);
    FetchResult out;
    out.report.started = std::chrono::system_clock::now();
    const net::SocketAddress dest = destination(recipe, out.report);
    auto conn = open(recipe, dest, out.report);
    out.report.protocol_used = conn->protocol();
    http::Request req;
    req.path = recipe.endpoint.resource_path;
    req.authority = recipe.presented_hostname;
    out.response = conn->exchange(req, options_.io_timeout);
    ++out.report.request_count;
    conn->close();
    out.report.bytes_sent += conn->sent();
    out.report.bytes_received += conn->received();
    out.report.bytes_total = out.report.bytes_sent + out.report.bytes_received;
    out.report.finished = std::chrono::system_clock::now();
    return out;
}

TrafficReport TrafficEngine::generate_control_traffic(std::uint64_t control_size, const EndpointSpec& control,
                                                      Protocol protocol, net::IpVersion version)
{
    return run_recipe(TrafficRecipe::verify(control, protocol, version, control_size));
}

FlowClassSet TrafficEngine::probe_endpoint_support(const EndpointSpec& endpoint)
{
    FlowClassSet out;
    for (auto p : kAllProtocols) {
        if (!endpoint.supports(p)) continue;
        for (auto v : kAllIpVersions) {
            try {
                auto r = fetch_once(TrafficRecipe::verify(endpoint, p, v, 1));
                if (r.response.status >= 200 && r.response.status < 500) out.insert({p, v});
            } catch (const Error&) {
            }
        }
    }
    return out;
}

} // namespace zr::engine
