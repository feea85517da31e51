#pragma once

// QUIC-framed datagram transport used for HTTP/3 traffic.
//
// The client's first datagram is a standard QUIC v1 Initial carrying the TLS
// ClientHello in a CRYPTO frame, so on-path classifiers see exactly what a
// real QUIC client sends. Everything after that travels in short-header
// packets that carry the TLS 1.3 record stream with go-back-N reliability:
//
//   byte 0      0x40 | type (0 data, 1 ack, 2 close)
//   bytes 1..8  connection id (the client's original destination id)
//   varint      stream offset of the data
//   varint      cumulative ack (next stream offset expected from the peer)
//   ...         stream data
//
// Both directions reuse the client's connection id as the lookup key.

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <thread>

#include "zr/bytes.hpp"
#include "zr/net.hpp"
#include "zr/tls.hpp"
#include "zr/transport.hpp"

namespace zr::quic {

inline constexpr std::size_t kConnectionIdLength = 8;
inline constexpr std::size_t kMaxStreamChunk = 1350;
inline constexpr std::uint64_t kWindow = 192 * 1024;

enum class ShortType : std::uint8_t { Data = 0, Ack = 1, Close = 2 };

struct ShortPacket {
    ShortType type = ShortType::Data;
    ByteVec dcid;
    std::uint64_t offset = 0;
    std::uint64_t ack = 0;
    ByteVec data;
};

ByteVec encode_short(const ShortPacket& p);
std::optional<ShortPacket> decode_short(ByteView datagram);

/// One direction-pair of the reliable stream. Not thread-safe.
class Link {
public:
    using Clock = std::chrono::steady_clock;
    using SendFn = std::function<void(ByteView)>;

    explicit Link(ByteVec dcid) : dcid_(std::move(dcid)) {}

    void queue(ByteView data) { append(sbuf_, data); }
    /// Applies an incoming packet; in-order stream data is appended to `delivered`.
    void on_packet(const ShortPacket& p, ByteVec& delivered);
    /// Emits due data, retransmissions and acks.
    void transmit(Clock::time_point now, const SendFn& send);
    void send_close(const SendFn& send);

    Clock::time_point deadline() const;
    bool idle() const { return sbuf_.empty(); }
    bool peer_closed() const { return peer_closed_; }
    bool heard_from_peer() const { return heard_; }
    const ByteVec& dcid() const { return dcid_; }

private:
    ByteVec dcid_;
    ByteVec sbuf_;             // unacknowledged bytes starting at sbase_
    std::uint64_t sbase_ = 0;
    std::uint64_t snext_ = 0;
    std::uint64_t rnext_ = 0;
    std::uint64_t cwnd_ = kWindow; // sending window, collapses after a timeout
    bool ack_due_ = false;
    bool peer_closed_ = false;
    bool heard_ = false;
    std::chrono::milliseconds rto_{25};
    std::optional<Clock::time_point> rto_deadline_;
};

/// Payload bytes exchanged by a connection attempt.
struct AttemptBytes {
    std::uint64_t sent = 0;
    std::uint64_t received = 0;
};

class ClientConnection {
public:
    /// Sends the Initial and completes the TLS handshake. Throws
    /// Error{ConnectFailed} when the server never answers and
    /// Error{ProtocolUnsupported} when the handshake fails; `failed` then
    /// receives the bytes the attempt exchanged.
    static std::unique_ptr<ClientConnection> connect(transport::DatagramChannel channel,
                                                     std::shared_ptr<tls::Context> ctx, net::Millis timeout,
                                                     AttemptBytes* failed = nullptr);

    void write(ByteView app_data);
    /// Application bytes that arrived within `timeout`; empty on timeout.
    /// Throws Error{IoFailure} if the peer closed or TLS failed.
    ByteVec read(net::Millis timeout);
    void close();

    const transport::DatagramChannel& channel() const { return channel_; }
    std::string alpn() const { return session_.negotiated_alpn(); }

private:
    ClientConnection(transport::DatagramChannel ch, std::shared_ptr<tls::Context> ctx, ByteVec dcid);
    bool pump(net::Millis wait); // true if any packet arrived
    void flush_tls();

    transport::DatagramChannel channel_;
    tls::Session session_;
    Link link_;
    ByteVec inbound_;
    bool closed_ = false;
};

/// Multi-connection server. Each connection gets its own stream handler,
/// fed decrypted request bytes and returning response bytes.
class Server {
public:
    using StreamHandler = std::function<ByteVec(ByteView)>;
    using HandlerFactory = std::function<StreamHandler()>;

    Server(const net::SocketAddress& bind, std::shared_ptr<tls::Context> ctx, HandlerFactory factory);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    net::SocketAddress local_address() const { return local_; }
    void stop();

private:
    struct Conn;
    void run();
    void on_datagram(ByteView data, const net::SocketAddress& from);

    net::Socket socket_;
    net::SocketAddress local_;
    std::shared_ptr<tls::Context> ctx_;
    HandlerFactory factory_;
    std::map<ByteVec, std::unique_ptr<Conn>> conns_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

} // namespace zr::quic
