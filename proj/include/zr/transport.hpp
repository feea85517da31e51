#pragma once

// Byte-counting stream and datagram channels. A channel either dials its
// destination directly or tunnels through the operator gateway, in which
// case the gateway header is excluded from the counters.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zr/bytes.hpp"
#include "zr/net.hpp"
#include "zr/protocol.hpp"

namespace zr::transport {

/// Translation of (virtual address, transport) to a reachable socket address.
/// Loopback destinations pass through unchanged; anything else without an
/// entry is unreachable.
class DialMap {
public:
    void add(const net::SocketAddress& virtual_addr, Transport t, const net::SocketAddress& real);
    std::optional<net::SocketAddress> resolve(const net::SocketAddress& dest, Transport t) const;
    bool empty() const { return entries_.empty(); }

    struct Entry {
        net::SocketAddress virtual_addr;
        Transport transport;
        net::SocketAddress real;
    };
    std::vector<Entry> entries() const;

private:
    std::map<std::pair<net::SocketAddress, Transport>, net::SocketAddress> entries_;
};

struct Route {
    enum class Kind { Direct, Gateway };
    Kind kind = Kind::Direct;
    net::SocketAddress tcp_gateway;
    net::SocketAddress udp_gateway;
    /// Consulted for Direct routes only; empty means dial destinations as given.
    DialMap dial;

    static Route direct() { return {}; }
    static Route gateway(net::SocketAddress tcp, net::SocketAddress udp)
    {
        Route r;
        r.kind = Kind::Gateway;
        r.tcp_gateway = tcp;
        r.udp_gateway = udp;
        return r;
    }
    std::string to_string() const;
};

class StreamChannel {
public:
    StreamChannel() = default;
    /// Throws Error{ConnectFailed}.
    static StreamChannel connect(const Route& route, const net::SocketAddress& dest,
                                 net::Millis timeout = net::Millis{3000});

    void send(ByteView data);
    /// Nullopt on timeout, 0 on orderly close.
    std::optional<std::size_t> recv(std::span<std::uint8_t> buf, net::Millis timeout);
    void close() { socket_.reset(); }
    bool open() const { return socket_.valid(); }

    std::uint64_t bytes_sent() const { return sent_; }
    std::uint64_t bytes_received() const { return received_; }

private:
    net::Socket socket_;
    std::uint64_t sent_ = 0;
    std::uint64_t received_ = 0;
};

class DatagramChannel {
public:
    DatagramChannel() = default;
    static DatagramChannel open(const Route& route, const net::SocketAddress& dest);

    void send(ByteView datagram);
    /// Next datagram, or nullopt on timeout.
    std::optional<ByteVec> recv(net::Millis timeout);
    void close() { socket_.reset(); }

    std::uint64_t bytes_sent() const { return sent_; }
    std::uint64_t bytes_received() const { return received_; }

private:
    net::Socket socket_;
    ByteVec header_; // empty for direct routes
    std::uint64_t sent_ = 0;
    std::uint64_t received_ = 0;
    ByteVec scratch_;
};

} // namespace zr::transport
