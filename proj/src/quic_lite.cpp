#include "zr/quic_lite.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cerrno>

#include "zr/crypto.hpp"
#include "zr/error.hpp"
#include "zr/quic_initial.hpp"

namespace zr::quic {

namespace {

constexpr std::chrono::milliseconds kBaseRto{25};
constexpr std::chrono::milliseconds kMaxRto{400};

/// Strips the record header(s) off the client's first flight.
std::optional<ByteVec> client_hello_from_records(ByteView records)
{
    ByteVec out;
    Reader r(records);
    while (!r.empty()) {
        std::uint8_t type = r.u8();
        r.u16();
        std::uint16_t len = r.u16();
        auto body = r.bytes(len);
        if (!r.ok() || type != 0x16) return std::nullopt;
        append(out, body);
    }
    return out;
}

ByteVec wrap_client_hello(ByteView ch)
{
    ByteVec rec{0x16, 0x03, 0x01};
    put_u16(rec, static_cast<std::uint16_t>(ch.size()));
    append(rec, ch);
    return rec;
}

} // namespace

ByteVec encode_short(const ShortPacket& p)
{
    ByteVec out;
    out.reserve(1 + p.dcid.size() + 16 + p.data.size());
    out.push_back(static_cast<std::uint8_t>(0x40 | static_cast<std::uint8_t>(p.type)));
    append(out, p.dcid);
    put_varint(out, p.offset);
    put_varint(out, p.ack);
    append(out, p.data);
    return out;
}

std::optional<ShortPacket> decode_short(ByteView datagram)
{
    Reader r(datagram);
    std::uint8_t first = r.u8();
    if (!r.ok() || (first & 0xc0) != 0x40 || (first & 0x3f) > 2) return std::nullopt;
    ShortPacket p;
    p.type = static_cast<ShortType>(first & 0x3f);
    auto id = r.bytes(kConnectionIdLength);
    p.offset = r.varint();
    p.ack = r.varint();
    if (!r.ok()) return std::nullopt;
    p.dcid.assign(id.begin(), id.end());
    auto rest = r.bytes(r.remaining());
    p.data.assign(rest.begin(), rest.end());
    return p;
}

void Link::on_packet(const ShortPacket& p, ByteVec& delivered)
{
    heard_ = true;
    if (p.type == ShortType::Close) {
        peer_closed_ = true;
        return;
    }
    if (p.ack > sbase_ && p.ack <= sbase_ + sbuf_.size()) {
        sbuf_.erase(sbuf_.begin(), sbuf_.begin() + static_cast<std::ptrdiff_t>(p.ack - sbase_));
        sbase_ = p.ack;
        if (snext_ < sbase_) snext_ = sbase_;
        rto_ = kBaseRto;
        cwnd_ = std::min<std::uint64_t>(cwnd_ * 2, kWindow);
        rto_deadline_.reset();
        if (snext_ > sbase_) rto_deadline_ = Clock::now() + rto_;
    }
    if (p.type == ShortType::Data && !p.data.empty()) {
        const std::uint64_t end = p.offset + p.data.size();
        if (p.offset <= rnext_ && end > rnext_) {
            delivered.insert(delivered.end(), p.data.begin() + static_cast<std::ptrdiff_t>(rnext_ - p.offset),
                             p.data.end());
            rnext_ = end;
        }
        ack_due_ = true;
    }
}

void Link::transmit(Clock::time_point now, const SendFn& send)
{
    if (rto_deadline_ && now >= *rto_deadline_) {
        // Go back N, restarting from one segment: a timeout that was only a
        // late ack then costs a single duplicate instead of a whole window.
        snext_ = sbase_;
        cwnd_ = kMaxStreamChunk;
        rto_ = std::min(rto_ * 2, kMaxRto);
        rto_deadline_.reset();
    }
    const std::uint64_t end = sbase_ + sbuf_.size();
    while (snext_ < end && snext_ - sbase_ < cwnd_) {
        std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>({end - snext_, kMaxStreamChunk,
                                                                          cwnd_ - (snext_ - sbase_)}));
        ShortPacket p{ShortType::Data, dcid_, snext_, rnext_, {}};
        auto from = sbuf_.begin() + static_cast<std::ptrdiff_t>(snext_ - sbase_);
        p.data.assign(from, from + static_cast<std::ptrdiff_t>(n));
        send(encode_short(p));
        snext_ += n;
        ack_due_ = false;
        if (!rto_deadline_) rto_deadline_ = now + rto_;
    }
    if (ack_due_) {
        send(encode_short({ShortType::Ack, dcid_, snext_, rnext_, {}}));
        ack_due_ = false;
    }
}

void Link::send_close(const SendFn& send)
{
    send(encode_short({ShortType::Close, dcid_, snext_, rnext_, {}}));
}

Link::Clock::time_point Link::deadline() const
{
    return rto_deadline_.value_or(Clock::time_point::max());
}

// ---------------------------------------------------------------- client

ClientConnection::ClientConnection(transport::DatagramChannel ch, std::shared_ptr<tls::Context> ctx, ByteVec dcid)
    : channel_(std::move(ch)), session_(std::move(ctx)), link_(std::move(dcid))
{
}

std::unique_ptr<ClientConnection> ClientConnection::connect(transport::DatagramChannel channel,
                                                            std::shared_ptr<tls::Context> ctx, net::Millis timeout,
                                                            AttemptBytes* failed)
{
    ByteVec dcid(kConnectionIdLength), scid(kConnectionIdLength);
    crypto::random_bytes(dcid);
    crypto::random_bytes(scid);
    std::unique_ptr<ClientConnection> c(new ClientConnection(std::move(channel), std::move(ctx), dcid));
    try {
        if (c->session_.handshake() == tls::Status::Failed)
            throw Error(Errc::ProtocolUnsupported, "TLS client setup: " + c->session_.error_text());
        auto hello = client_hello_from_records(c->session_.take_output());
        if (!hello || hello->empty()) throw Error(Errc::ProtocolUnsupported, "unexpected TLS first flight");
        const ByteVec initial = build_client_initial(dcid, scid, 0, *hello);

        using Clock = Link::Clock;
        const auto give_up = Clock::now() + timeout;
        auto resend_at = Clock::now();
        net::Millis resend_every{50};
        while (!c->session_.handshake_done()) {
            auto now = Clock::now();
            if (now >= give_up) {
                c->link_.send_close([&](ByteView d) { c->channel_.send(d); });
                throw Error(Errc::ConnectFailed, "QUIC handshake timed out");
            }
            if (!c->link_.heard_from_peer() && now >= resend_at) {
                c->channel_.send(initial);
                resend_at = now + resend_every;
                resend_every = std::min(resend_every * 2, net::Millis{1000});
            }
            c->pump(net::Millis{10});
            if (!c->inbound_.empty()) {
                c->session_.feed(c->inbound_);
                c->inbound_.clear();
            }
            auto st = c->session_.handshake();
            c->flush_tls();
            if (st == tls::Status::Failed || st == tls::Status::Closed) {
                std::string why = c->session_.error_text();
                c->link_.transmit(Clock::now(), [&](ByteView d) { c->channel_.send(d); });
                c->link_.send_close([&](ByteView d) { c->channel_.send(d); });
                throw Error(Errc::ProtocolUnsupported, "TLS handshake failed: " + why);
            }
            if (c->link_.peer_closed()) throw Error(Errc::ProtocolUnsupported, "server closed during handshake");
        }
        c->link_.transmit(Clock::now(), [&](ByteView d) { c->channel_.send(d); });
        return c;
    } catch (const Error&) {
        // The attempt's datagrams were on the wire; callers account for them.
        if (failed) *failed = {c->channel_.bytes_sent(), c->channel_.bytes_received()};
        throw;
    }
}

void ClientConnection::flush_tls()
{
    if (session_.has_output()) link_.queue(session_.take_output());
}

bool ClientConnection::pump(net::Millis wait)
{
    auto send = [this](ByteView d) { channel_.send(d); };
    link_.transmit(Link::Clock::now(), send);
    auto until_rto = std::chrono::duration_cast<net::Millis>(link_.deadline() - Link::Clock::now());
    if (link_.deadline() != Link::Clock::time_point::max()) wait = std::clamp(until_rto, net::Millis{0}, wait);
    bool any = false;
    auto dgram = channel_.recv(wait);
    while (dgram) {
        if (auto p = decode_short(*dgram); p && p->dcid == link_.dcid()) {
            link_.on_packet(*p, inbound_);
            any = true;
        }
        dgram = channel_.recv(net::Millis{0});
    }
    link_.transmit(Link::Clock::now(), send);
    return any;
}

void ClientConnection::write(ByteView app_data)
{
    session_.write(app_data);
    flush_tls();
    link_.transmit(Link::Clock::now(), [this](ByteView d) { channel_.send(d); });
}

ByteVec ClientConnection::read(net::Millis timeout)
{
    ByteVec out;
    const auto until = Link::Clock::now() + timeout;
    for (;;) {
        auto now = Link::Clock::now();
        auto left = std::chrono::duration_cast<net::Millis>(until - now);
        pump(std::max(left, net::Millis{0}));
        if (!inbound_.empty()) {
            session_.feed(inbound_);
            inbound_.clear();
            auto st = session_.read(out);
            flush_tls();
            if (st == tls::Status::Failed) throw Error(Errc::IoFailure, "TLS read: " + session_.error_text());
            if (!out.empty()) return out;
            if (st == tls::Status::Closed) throw Error(Errc::IoFailure, "peer closed");
        }
        if (link_.peer_closed()) throw Error(Errc::IoFailure, "peer closed");
        if (Link::Clock::now() >= until) return out;
    }
}

void ClientConnection::close()
{
    if (closed_) return;
    closed_ = true;
    auto send = [this](ByteView d) { channel_.send(d); };
    try {
        session_.close();
        flush_tls();
        link_.transmit(Link::Clock::now(), send);
        link_.send_close(send);
    } catch (const Error&) {
    }
}

// ---------------------------------------------------------------- server

struct Server::Conn {
    Conn(std::shared_ptr<tls::Context> ctx, ByteVec dcid, StreamHandler h)
        : session(std::move(ctx)), link(std::move(dcid)), handler(std::move(h))
    {
    }
    tls::Session session;
    Link link;
    StreamHandler handler;
    net::SocketAddress peer;
    Link::Clock::time_point last_seen = Link::Clock::now();
    bool dead = false;
};

Server::Server(const net::SocketAddress& bind, std::shared_ptr<tls::Context> ctx, HandlerFactory factory)
    : ctx_(std::move(ctx)), factory_(std::move(factory))
{
    socket_ = net::udp_bind(bind);
    local_ = net::local_address(socket_.fd());
    thread_ = std::thread([this] { run(); });
}

Server::~Server() { stop(); }

void Server::stop()
{
    stop_ = true;
    if (thread_.joinable()) thread_.join();
}

void Server::on_datagram(ByteView data, const net::SocketAddress& from)
{
    if (data.empty()) return;
    if (data[0] & 0x80) {
        auto info = parse_long_header(data);
        if (!info || info->version != kVersion1 || info->type != LongType::Initial) return;
        if (conns_.count(info->dcid)) return; // retransmitted Initial
        auto keys = derive_initial_secrets(info->dcid).client;
        auto opened = open_long_packet(data, keys);
        if (!opened) return;
        auto hello = collect_crypto_stream(opened->payload);
        if (!hello || hello->empty()) return;
        auto conn = std::make_unique<Conn>(ctx_, info->dcid, factory_());
        conn->peer = from;
        conn->session.feed(wrap_client_hello(*hello));
        if (conn->session.handshake() == tls::Status::Failed) return;
        conn->link.queue(conn->session.take_output());
        conns_[info->dcid] = std::move(conn);
        return;
    }
    auto pkt = decode_short(data);
    if (!pkt) return;
    auto it = conns_.find(pkt->dcid);
    if (it == conns_.end()) return;
    Conn& c = *it->second;
    c.peer = from;
    c.last_seen = Link::Clock::now();
    ByteVec delivered;
    c.link.on_packet(*pkt, delivered);
    if (c.link.peer_closed()) {
        c.dead = true;
        return;
    }
    if (delivered.empty()) return;
    c.session.feed(delivered);
    if (!c.session.handshake_done()) {
        auto st = c.session.handshake();
        if (st == tls::Status::Failed || st == tls::Status::Closed) {
            c.link.queue(c.session.take_output());
            c.dead = true;
            return;
        }
    }
    if (c.session.handshake_done()) {
        ByteVec app;
        auto st = c.session.read(app);
        if (!app.empty()) {
            try {
                ByteVec reply = c.handler(app);
                if (!reply.empty()) c.session.write(reply);
            } catch (const std::exception&) {
                c.dead = true;
            }
        }
        if (st == tls::Status::Failed) c.dead = true;
    }
    if (c.session.has_output()) c.link.queue(c.session.take_output());
}

void Server::run()
{
    ByteVec buf(65536);
    while (!stop_) {
        auto now = Link::Clock::now();
        auto next = now + net::Millis{50};
        for (auto& [id, c] : conns_) next = std::min(next, c->link.deadline());
        auto wait = std::chrono::duration_cast<net::Millis>(next - now);
        net::wait_readable(socket_.fd(), std::clamp(wait, net::Millis{0}, net::Millis{50}));
        for (;;) {
            sockaddr_storage ss{};
            socklen_t sl = sizeof(ss);
            ssize_t n = ::recvfrom(socket_.fd(), buf.data(), buf.size(), MSG_DONTWAIT,
                                   reinterpret_cast<sockaddr*>(&ss), &sl);
            if (n < 0) {
                if (errno == EINTR) continue;
                break;
            }
            auto from = net::SocketAddress::from_sockaddr(reinterpret_cast<sockaddr*>(&ss));
            try {
                on_datagram(ByteView(buf.data(), static_cast<std::size_t>(n)), from);
            } catch (const std::exception&) {
            }
        }
        now = Link::Clock::now();
        for (auto it = conns_.begin(); it != conns_.end();) {
            Conn& c = *it->second;
            sockaddr_storage ss{};
            socklen_t sl = c.peer.to_sockaddr(ss);
            auto send = [&](ByteView d) {
                ::sendto(socket_.fd(), d.data(), d.size(), 0, reinterpret_cast<sockaddr*>(&ss), sl);
            };
            if (!c.dead) c.link.transmit(now, send);
            bool expired = now - c.last_seen > std::chrono::seconds(30);
            if (c.dead || expired) {
                if (!c.link.peer_closed()) {
                    c.link.transmit(now, send);
                    c.link.send_close(send);
                }
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }
}

} // namespace zr::quic
