#include "zr/transport.hpp"

#include <sys/socket.h>

#include <cerrno>

#include "zr/error.hpp"
#include "zr/gateway_protocol.hpp"

namespace zr::transport {

void DialMap::add(const net::SocketAddress& virtual_addr, Transport t, const net::SocketAddress& real)
{
    entries_[{virtual_addr, t}] = real;
}

std::optional<net::SocketAddress> DialMap::resolve(const net::SocketAddress& dest, Transport t) const
{
    if (auto it = entries_.find({dest, t}); it != entries_.end()) return it->second;
    if (dest.ip.is_loopback()) return dest;
    return std::nullopt;
}

std::vector<DialMap::Entry> DialMap::entries() const
{
    std::vector<Entry> out;
    for (const auto& [k, v] : entries_) out.push_back({k.first, k.second, v});
    return out;
}

std::string Route::to_string() const
{
    if (kind == Kind::Direct) return "direct";
    return "gateway tcp=" + tcp_gateway.to_string() + " udp=" + udp_gateway.to_string();
}

namespace {

net::SocketAddress direct_target(const Route& route, const net::SocketAddress& dest, Transport t)
{
    if (route.dial.empty()) return dest;
    auto real = route.dial.resolve(dest, t);
    if (!real) throw Error(Errc::ConnectFailed, "no route to " + dest.to_string());
    return *real;
}

} // namespace

StreamChannel StreamChannel::connect(const Route& route, const net::SocketAddress& dest, net::Millis timeout)
{
    StreamChannel ch;
    try {
        if (route.kind == Route::Kind::Direct) {
            ch.socket_ = net::tcp_connect(direct_target(route, dest, Transport::Tcp), timeout);
        } else {
            ch.socket_ = net::tcp_connect(route.tcp_gateway, timeout);
            net::send_all(ch.socket_.fd(), gw::encode_header({Transport::Tcp, dest}));
        }
    } catch (const Error& e) {
        if (e.code() == Errc::ConnectFailed) throw;
        throw Error(Errc::ConnectFailed, dest.to_string() + ": " + e.what());
    }
    return ch;
}

void StreamChannel::send(ByteView data)
{
    if (!socket_) throw Error(Errc::IoFailure, "send on closed channel");
    net::send_all(socket_.fd(), data);
    sent_ += data.size();
}

std::optional<std::size_t> StreamChannel::recv(std::span<std::uint8_t> buf, net::Millis timeout)
{
    if (!socket_) return 0;
    if (!net::wait_readable(socket_.fd(), timeout)) return std::nullopt;
    std::size_t n = 0;
    try {
        n = net::recv_some(socket_.fd(), buf);
    } catch (const Error&) {
        n = 0; // reset by peer reads as close
    }
    received_ += n;
    return n;
}

DatagramChannel DatagramChannel::open(const Route& route, const net::SocketAddress& dest)
{
    DatagramChannel ch;
    try {
        if (route.kind == Route::Kind::Direct) {
            ch.socket_ = net::udp_connect(direct_target(route, dest, Transport::Udp));
        } else {
            ch.socket_ = net::udp_connect(route.udp_gateway);
            ch.header_ = gw::encode_header({Transport::Udp, dest});
        }
    } catch (const Error& e) {
        if (e.code() == Errc::ConnectFailed) throw;
        throw Error(Errc::ConnectFailed, dest.to_string() + ": " + e.what());
    }
    ch.scratch_.resize(65536);
    return ch;
}

void DatagramChannel::send(ByteView datagram)
{
    if (!socket_) throw Error(Errc::IoFailure, "send on closed channel");
    ssize_t n;
    if (header_.empty()) {
        n = ::send(socket_.fd(), datagram.data(), datagram.size(), 0);
    } else {
        iovec iov[2] = {{header_.data(), header_.size()},
                        {const_cast<std::uint8_t*>(datagram.data()), datagram.size()}};
        msghdr msg{};
        msg.msg_iov = iov;
        msg.msg_iovlen = 2;
        n = ::sendmsg(socket_.fd(), &msg, 0);
    }
    // Datagrams lost locally (ECONNREFUSED from a prior ICMP, ENOBUFS) are
    // treated like network loss; the sender retransmits. They never left the
    // host, so they are not counted.
    if (n < 0) {
        if (errno != ECONNREFUSED && errno != ENOBUFS && errno != EAGAIN) throw Error(Errc::IoFailure, "udp send failed");
        return;
    }
    sent_ += datagram.size();
}

std::optional<ByteVec> DatagramChannel::recv(net::Millis timeout)
{
    if (!socket_) return std::nullopt;
    for (;;) {
        if (timeout.count() >= 0 && !net::wait_readable(socket_.fd(), timeout)) return std::nullopt;
        ssize_t n = ::recv(socket_.fd(), scratch_.data(), scratch_.size(), MSG_DONTWAIT);
        if (n < 0) {
            if (errno == EINTR || errno == ECONNREFUSED) continue;
            if (errno == EAGAIN) return std::nullopt;
            throw Error(Errc::IoFailure, "udp recv failed");
        }
        ByteView dgram(scratch_.data(), static_cast<std::size_t>(n));
        if (!header_.empty()) {
            std::optional<std::pair<gw::Header, std::size_t>> h;
            try {
                h = gw::decode_header(dgram);
            } catch (const Error&) {
                continue;
            }
            if (!h) continue;
            dgram = dgram.subspan(h->second);
        }
        received_ += dgram.size();
        return ByteVec(dgram.begin(), dgram.end());
    }
}

} // namespace zr::transport
