#include "zr/sim/gateway.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <cerrno>

#include "zr/error.hpp"
#include "zr/gateway_protocol.hpp"

namespace zr::sim {

Subscriber::Subscriber(OperatorProfile profile)
    : profile_(std::move(profile)), meter_(profile_.quota_bytes, profile_.granularity, profile_.billing_lag)
{
    meter_.set_meter_directions(profile_.meter_uplink, profile_.meter_downlink);
}

void Subscriber::load_profile(OperatorProfile profile)
{
    profile.validate();
    std::lock_guard lk(mu_);
    meter_.reset(profile.quota_bytes, profile.granularity, profile.billing_lag);
    meter_.set_meter_directions(profile.meter_uplink, profile.meter_downlink);
    profile_ = std::move(profile);
}

OperatorProfile Subscriber::profile() const
{
    std::lock_guard lk(mu_);
    return profile_;
}

void Subscriber::set_session(SessionKind kind)
{
    std::lock_guard lk(mu_);
    session_ = kind;
}

SessionKind Subscriber::session() const
{
    std::lock_guard lk(mu_);
    return session_;
}

Classification Subscriber::classify(const FlowInfo& flow, SessionKind* session_out) const
{
    std::lock_guard lk(mu_);
    if (session_out) *session_out = session_;
    return classify_flow(profile_, session_, flow);
}

namespace {

/// Classification state shared by the TCP and UDP paths: bytes seen before
/// the decision are held back and metered under it.
struct FlowState {
    Subscriber& sub;
    std::uint64_t id;
    net::IpAddress destination;
    FlowInspector inspector;
    bool decided = false;
    std::uint64_t pending_up = 0;
    std::uint64_t pending_down = 0;

    void decide()
    {
        if (decided) return;
        decided = true;
        FlowInfo info{inspector.flow_class(), destination, inspector.hostname()};
        SessionKind session;
        auto c = sub.classify(info, &session);
        sub.meter().classify(id, info, c, session);
        sub.meter().charge(id, pending_up, true);
        sub.meter().charge(id, pending_down, false);
        pending_up = pending_down = 0;
    }

    void upstream(ByteView data)
    {
        if (!decided) {
            inspector.client_bytes(data);
            pending_up += data.size();
            if (inspector.done()) decide();
            return;
        }
        sub.meter().charge(id, data.size(), true);
    }

    void downstream(ByteView data)
    {
        decide(); // the server speaking first ends inspection
        sub.meter().charge(id, data.size(), false);
    }
};

} // namespace

struct Gateway::UdpFlow {
    net::Socket upstream;
    net::SocketAddress client;
    ByteVec reply_header;
    std::unique_ptr<FlowState> state;
    std::chrono::steady_clock::time_point last_active;
};

Gateway::Gateway(GatewayConfig config, Subscriber& subscriber) : config_(std::move(config)), subscriber_(subscriber)
{
    try {
        tcp_ = std::make_unique<net::TcpServer>(config_.tcp_bind, [this](net::Socket& s) { handle_tcp(s); });
        udp_ = net::udp_bind(config_.udp_bind);
        udp_local_ = net::local_address(udp_.fd());
    } catch (const Error& e) {
        throw Error(Errc::BindFailed, std::string("gateway: ") + e.what());
    }
    udp_thread_ = std::thread([this] { udp_loop(); });
}

Gateway::~Gateway() { stop(); }

void Gateway::stop()
{
    stop_ = true;
    if (tcp_) tcp_->stop();
    if (udp_thread_.joinable()) udp_thread_.join();
}

void Gateway::handle_tcp(net::Socket& client)
{
    ByteVec buf;
    std::uint8_t tmp[4096];
    std::optional<std::pair<gw::Header, std::size_t>> header;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!header) {
        if (std::chrono::steady_clock::now() > deadline || !net::wait_readable(client.fd(), net::Millis{200})) {
            if (stop_ || std::chrono::steady_clock::now() > deadline) return;
            continue;
        }
        std::size_t n = net::recv_some(client.fd(), tmp);
        if (n == 0) return;
        buf.insert(buf.end(), tmp, tmp + n);
        header = gw::decode_header(buf); // throws on garbage, dropping the connection
        if (!header && buf.size() > 64) return;
    }
    if (header->first.transport != Transport::Tcp) return;
    const net::SocketAddress dest = header->first.destination;
    auto real = config_.routes.resolve(dest, Transport::Tcp);
    if (!real) return;
    net::Socket upstream;
    try {
        upstream = net::tcp_connect(*real, net::Millis{3000});
    } catch (const Error&) {
        return;
    }

    sockaddr_storage ss{};
    socklen_t sl = sizeof(ss);
    ::getpeername(client.fd(), reinterpret_cast<sockaddr*>(&ss), &sl);
    FlowRecord rec;
    rec.client = net::SocketAddress::from_sockaddr(reinterpret_cast<sockaddr*>(&ss));
    rec.destination = dest;
    rec.transport = Transport::Tcp;
    rec.flow_class = {Protocol::Http, dest.ip.version()};
    FlowState state{subscriber_, subscriber_.meter().open_flow(rec), dest.ip,
                    FlowInspector(Transport::Tcp, dest.ip.version())};

    ByteView early = ByteView(buf).subspan(header->second);
    if (!early.empty()) {
        state.upstream(early);
        net::send_all(upstream.fd(), early);
    }
    net::splice(
        client.fd(), upstream.fd(),
        [&](ByteView chunk, bool up) {
            if (up) state.upstream(chunk);
            else state.downstream(chunk);
        },
        stop_);
    state.decide();
}

void Gateway::udp_loop()
{
    std::map<std::pair<net::SocketAddress, net::SocketAddress>, std::unique_ptr<UdpFlow>> flows;
    ByteVec buf(65536 + 64);
    std::vector<pollfd> fds;
    std::vector<UdpFlow*> owners;
    auto last_sweep = std::chrono::steady_clock::now();

    while (!stop_) {
        fds.assign(1, pollfd{udp_.fd(), POLLIN, 0});
        owners.assign(1, nullptr);
        for (auto& [k, f] : flows) {
            fds.push_back({f->upstream.fd(), POLLIN, 0});
            owners.push_back(f.get());
        }
        int n = ::poll(fds.data(), fds.size(), 100);
        if (n < 0 && errno != EINTR) break;
        const auto now = std::chrono::steady_clock::now();

        if (n > 0 && (fds[0].revents & POLLIN)) {
            for (int burst = 0; burst < 256; ++burst) {
                sockaddr_storage ss{};
                socklen_t sl = sizeof(ss);
                ssize_t got = ::recvfrom(udp_.fd(), buf.data(), buf.size(), MSG_DONTWAIT,
                                         reinterpret_cast<sockaddr*>(&ss), &sl);
                if (got < 0) break;
                ByteView dgram(buf.data(), static_cast<std::size_t>(got));
                std::optional<std::pair<gw::Header, std::size_t>> h;
                try {
                    h = gw::decode_header(dgram);
                } catch (const Error&) {
                    continue;
                }
                if (!h || h->first.transport != Transport::Udp) continue;
                const auto client = net::SocketAddress::from_sockaddr(reinterpret_cast<sockaddr*>(&ss));
                const auto dest = h->first.destination;
                auto& slot = flows[{client, dest}];
                if (!slot) {
                    auto real = config_.routes.resolve(dest, Transport::Udp);
                    if (!real) {
                        flows.erase({client, dest});
                        continue;
                    }
                    auto f = std::make_unique<UdpFlow>();
                    try {
                        f->upstream = net::udp_connect(*real);
                    } catch (const Error&) {
                        flows.erase({client, dest});
                        continue;
                    }
                    f->client = client;
                    f->reply_header = gw::encode_header({Transport::Udp, dest});
                    FlowRecord rec;
                    rec.client = client;
                    rec.destination = dest;
                    rec.transport = Transport::Udp;
                    rec.flow_class = {Protocol::Http3, dest.ip.version()};
                    f->state.reset(new FlowState{subscriber_, subscriber_.meter().open_flow(rec), dest.ip,
                                                 FlowInspector(Transport::Udp, dest.ip.version())});
                    slot = std::move(f);
                }
                UdpFlow& f = *slot;
                f.last_active = now;
                ByteView payload = dgram.subspan(h->second);
                f.state->upstream(payload);
                ::send(f.upstream.fd(), payload.data(), payload.size(), 0);
            }
        }

        for (std::size_t i = 1; n > 0 && i < fds.size(); ++i) {
            if (!(fds[i].revents & POLLIN)) continue;
            UdpFlow& f = *owners[i];
            sockaddr_storage ss{};
            socklen_t sl = f.client.to_sockaddr(ss);
            for (int burst = 0; burst < 256; ++burst) {
                ssize_t got = ::recv(f.upstream.fd(), buf.data() + f.reply_header.size(), 65536, MSG_DONTWAIT);
                if (got < 0) break;
                std::copy(f.reply_header.begin(), f.reply_header.end(), buf.begin());
                f.state->downstream(ByteView(buf.data() + f.reply_header.size(), static_cast<std::size_t>(got)));
                f.last_active = now;
                ::sendto(udp_.fd(), buf.data(), f.reply_header.size() + static_cast<std::size_t>(got), 0,
                         reinterpret_cast<sockaddr*>(&ss), sl);
            }
        }

        if (now - last_sweep > std::chrono::seconds(1)) {
            last_sweep = now;
            for (auto it = flows.begin(); it != flows.end();) {
                if (now - it->second->last_active > config_.udp_idle) {
                    it->second->state->decide();
                    it = flows.erase(it);
                } else {
                    ++it;
                }
            }
        }
    }
    for (auto& [k, f] : flows) f->state->decide();
}

} // namespace zr::sim
