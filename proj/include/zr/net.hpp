#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <sys/socket.h>

#include "zr/bytes.hpp"

namespace zr::net {

enum class IpVersion : std::uint8_t { V4, V6 };

std::string_view to_string(IpVersion v) noexcept;
std::optional<IpVersion> parse_ip_version(std::string_view s) noexcept;

class IpAddress {
public:
    IpAddress() = default;

    static std::optional<IpAddress> parse(std::string_view text);
    static IpAddress v4(std::array<std::uint8_t, 4> octets);
    static IpAddress v6(std::array<std::uint8_t, 16> octets);
    static IpAddress loopback(IpVersion v);
    static IpAddress any(IpVersion v);

    IpVersion version() const noexcept { return v6_ ? IpVersion::V6 : IpVersion::V4; }
    bool is_v6() const noexcept { return v6_; }
    bool is_loopback() const noexcept;
    /// 4 bytes for IPv4, 16 for IPv6.
    std::span<const std::uint8_t> bytes() const noexcept { return {bytes_.data(), v6_ ? 16u : 4u}; }
    std::string to_string() const;

    auto operator<=>(const IpAddress&) const = default;

private:
    std::array<std::uint8_t, 16> bytes_{};
    bool v6_ = false;
};

struct SocketAddress {
    IpAddress ip;
    std::uint16_t port = 0;

    /// Accepts "1.2.3.4:80", "[::1]:443".
    static std::optional<SocketAddress> parse(std::string_view text);
    static SocketAddress from_sockaddr(const sockaddr* sa);
    socklen_t to_sockaddr(sockaddr_storage& out) const;
    std::string to_string() const;

    auto operator<=>(const SocketAddress&) const = default;
};

struct IpPrefix {
    IpAddress network;
    unsigned length = 0;

    /// "192.0.2.0/24", "2001:db8::/32"; a bare address is a host prefix.
    static std::optional<IpPrefix> parse(std::string_view text);
    bool contains(const IpAddress& addr) const noexcept;
    std::string to_string() const;

    bool operator==(const IpPrefix&) const = default;
};

/// Owning file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { reset(); }
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept
    {
        if (this != &other) reset(other.release());
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    explicit operator bool() const noexcept { return valid(); }
    int release() noexcept
    {
        int fd = fd_;
        fd_ = -1;
        return fd;
    }
    void reset(int fd = -1) noexcept;
    /// shutdown(SHUT_RDWR); wakes any thread blocked on the descriptor.
    void shutdown() noexcept;

private:
    int fd_ = -1;
};

using Millis = std::chrono::milliseconds;

Socket tcp_listen(const SocketAddress& addr, int backlog = 128);
Socket tcp_connect(const SocketAddress& addr, Millis timeout = Millis{3000});
Socket udp_bind(const SocketAddress& addr);
/// Unbound UDP socket of the given family, connected to `peer`.
Socket udp_connect(const SocketAddress& peer);

SocketAddress local_address(int fd);

/// True when readable (or hung up) within the timeout.
bool wait_readable(int fd, Millis timeout);

/// Throws Error{IoFailure} on error; handles partial writes.
void send_all(int fd, ByteView data);
/// Returns 0 on orderly shutdown; throws Error{IoFailure} on error.
std::size_t recv_some(int fd, std::span<std::uint8_t> buf);

void set_nonblocking(int fd, bool on);

} // namespace zr::net
