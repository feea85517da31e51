#include "zr/net.hpp"

#include <cerrno>
#include <cstring>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <unistd.h>

#include "zr/error.hpp"

namespace zr::net {

namespace {

std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

constexpr int kUdpBufferBytes = 4 * 1024 * 1024;

void tune_udp(int fd)
{
    int size = kUdpBufferBytes;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &size, sizeof(size));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &size, sizeof(size));
}

int family_of(const IpAddress& ip) { return ip.is_v6() ? AF_INET6 : AF_INET; }

} // namespace

std::string_view to_string(IpVersion v) noexcept { return v == IpVersion::V4 ? "v4" : "v6"; }

std::optional<IpVersion> parse_ip_version(std::string_view s) noexcept
{
    if (s == "v4" || s == "V4" || s == "ipv4" || s == "IPv4") return IpVersion::V4;
    if (s == "v6" || s == "V6" || s == "ipv6" || s == "IPv6") return IpVersion::V6;
    return std::nullopt;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text)
{
    std::string s(text);
    IpAddress out;
    if (s.find(':') != std::string::npos) {
        if (::inet_pton(AF_INET6, s.c_str(), out.bytes_.data()) != 1) return std::nullopt;
        out.v6_ = true;
    } else {
        if (::inet_pton(AF_INET, s.c_str(), out.bytes_.data()) != 1) return std::nullopt;
    }
    return out;
}

IpAddress IpAddress::v4(std::array<std::uint8_t, 4> octets)
{
    IpAddress out;
    std::memcpy(out.bytes_.data(), octets.data(), 4);
    return out;
}

IpAddress IpAddress::v6(std::array<std::uint8_t, 16> octets)
{
    IpAddress out;
    out.bytes_ = octets;
    out.v6_ = true;
    return out;
}

IpAddress IpAddress::loopback(IpVersion v)
{
    if (v == IpVersion::V4) return v4({127, 0, 0, 1});
    std::array<std::uint8_t, 16> b{};
    b[15] = 1;
    return v6(b);
}

IpAddress IpAddress::any(IpVersion v)
{
    return v == IpVersion::V4 ? v4({0, 0, 0, 0}) : v6({});
}

bool IpAddress::is_loopback() const noexcept
{
    if (!v6_) return bytes_[0] == 127;
    for (int i = 0; i < 15; ++i)
        if (bytes_[i] != 0) return false;
    return bytes_[15] == 1;
}

std::string IpAddress::to_string() const
{
    char buf[INET6_ADDRSTRLEN] = {};
    ::inet_ntop(v6_ ? AF_INET6 : AF_INET, bytes_.data(), buf, sizeof(buf));
    return buf;
}

std::optional<SocketAddress> SocketAddress::parse(std::string_view text)
{
    std::string_view host;
    std::string_view port;
    if (!text.empty() && text.front() == '[') {
        auto close = text.find(']');
        if (close == std::string_view::npos || close + 1 >= text.size() || text[close + 1] != ':')
            return std::nullopt;
        host = text.substr(1, close - 1);
        port = text.substr(close + 2);
    } else {
        auto colon = text.rfind(':');
        if (colon == std::string_view::npos) return std::nullopt;
        host = text.substr(0, colon);
        port = text.substr(colon + 1);
        if (host.find(':') != std::string_view::npos) return std::nullopt;
    }
    auto ip = IpAddress::parse(host);
    if (!ip || port.empty() || port.size() > 5) return std::nullopt;
    unsigned value = 0;
    for (char c : port) {
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + static_cast<unsigned>(c - '0');
    }
    if (value > 65535) return std::nullopt;
    return SocketAddress{*ip, static_cast<std::uint16_t>(value)};
}

SocketAddress SocketAddress::from_sockaddr(const sockaddr* sa)
{
    SocketAddress out;
    if (sa->sa_family == AF_INET6) {
        const auto* in6 = reinterpret_cast<const sockaddr_in6*>(sa);
        std::array<std::uint8_t, 16> b{};
        std::memcpy(b.data(), &in6->sin6_addr, 16);
        out.ip = IpAddress::v6(b);
        out.port = ntohs(in6->sin6_port);
    } else {
        const auto* in4 = reinterpret_cast<const sockaddr_in*>(sa);
        std::array<std::uint8_t, 4> b{};
        std::memcpy(b.data(), &in4->sin_addr, 4);
        out.ip = IpAddress::v4(b);
        out.port = ntohs(in4->sin_port);
    }
    return out;
}

socklen_t SocketAddress::to_sockaddr(sockaddr_storage& out) const
{
    std::memset(&out, 0, sizeof(out));
    if (ip.is_v6()) {
        auto* in6 = reinterpret_cast<sockaddr_in6*>(&out);
        in6->sin6_family = AF_INET6;
        in6->sin6_port = htons(port);
        std::memcpy(&in6->sin6_addr, ip.bytes().data(), 16);
        return sizeof(sockaddr_in6);
    }
    auto* in4 = reinterpret_cast<sockaddr_in*>(&out);
    in4->sin_family = AF_INET;
    in4->sin_port = htons(port);
    std::memcpy(&in4->sin_addr, ip.bytes().data(), 4);
    return sizeof(sockaddr_in);
}

std::string SocketAddress::to_string() const
{
    if (ip.is_v6()) return "[" + ip.to_string() + "]:" + std::to_string(port);
    return ip.to_string() + ":" + std::to_string(port);
}

std::optional<IpPrefix> IpPrefix::parse(std::string_view text)
{
    auto slash = text.find('/');
    auto ip = IpAddress::parse(text.substr(0, slash));
    if (!ip) return std::nullopt;
    unsigned max_len = ip->is_v6() ? 128 : 32;
    unsigned len = max_len;
    if (slash != std::string_view::npos) {
        auto digits = text.substr(slash + 1);
        if (digits.empty() || digits.size() > 3) return std::nullopt;
        len = 0;
        for (char c : digits) {
            if (c < '0' || c > '9') return std::nullopt;
            len = len * 10 + static_cast<unsigned>(c - '0');
        }
        if (len > max_len) return std::nullopt;
    }
    return IpPrefix{*ip, len};
}

bool IpPrefix::contains(const IpAddress& addr) const noexcept
{
    if (addr.version() != network.version()) return false;
    auto a = addr.bytes();
    auto n = network.bytes();
    unsigned full = length / 8;
    for (unsigned i = 0; i < full; ++i)
        if (a[i] != n[i]) return false;
    unsigned rem = length % 8;
    if (rem == 0) return true;
    std::uint8_t mask = static_cast<std::uint8_t>(0xff << (8 - rem));
    return (a[full] & mask) == (n[full] & mask);
}

std::string IpPrefix::to_string() const { return network.to_string() + "/" + std::to_string(length); }

void Socket::reset(int fd) noexcept
{
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
}

void Socket::shutdown() noexcept
{
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket tcp_listen(const SocketAddress& addr, int backlog)
{
    Socket s(::socket(family_of(addr.ip), SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s) throw Error(Errc::BindFailed, errno_text("socket"));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (addr.ip.is_v6()) ::setsockopt(s.fd(), IPPROTO_IPV6, IPV6_V6ONLY, &one, sizeof(one));
    sockaddr_storage ss;
    socklen_t len = addr.to_sockaddr(ss);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&ss), len) != 0)
        throw Error(Errc::BindFailed, errno_text(("bind " + addr.to_string()).c_str()));
    if (::listen(s.fd(), backlog) != 0) throw Error(Errc::BindFailed, errno_text("listen"));
    return s;
}

Socket tcp_connect(const SocketAddress& addr, Millis timeout)
{
    Socket s(::socket(family_of(addr.ip), SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s) throw Error(Errc::ConnectFailed, errno_text("socket"));
    set_nonblocking(s.fd(), true);
    sockaddr_storage ss;
    socklen_t len = addr.to_sockaddr(ss);
    int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&ss), len);
    if (rc != 0 && errno != EINPROGRESS)
        throw Error(Errc::ConnectFailed, errno_text(("connect " + addr.to_string()).c_str()));
    if (rc != 0) {
        pollfd pfd{s.fd(), POLLOUT, 0};
        int n = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (n <= 0) throw Error(Errc::ConnectFailed, "connect " + addr.to_string() + ": timed out");
        int err = 0;
        socklen_t elen = sizeof(err);
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &elen);
        if (err != 0)
            throw Error(Errc::ConnectFailed, "connect " + addr.to_string() + ": " + std::strerror(err));
    }
    set_nonblocking(s.fd(), false);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return s;
}

Socket udp_bind(const SocketAddress& addr)
{
    Socket s(::socket(family_of(addr.ip), SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!s) throw Error(Errc::BindFailed, errno_text("socket"));
    if (addr.ip.is_v6()) {
        int one = 1;
        ::setsockopt(s.fd(), IPPROTO_IPV6, IPV6_V6ONLY, &one, sizeof(one));
    }
    tune_udp(s.fd());
    sockaddr_storage ss;
    socklen_t len = addr.to_sockaddr(ss);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&ss), len) != 0)
        throw Error(Errc::BindFailed, errno_text(("bind udp " + addr.to_string()).c_str()));
    return s;
}

Socket udp_connect(const SocketAddress& peer)
{
    Socket s(::socket(family_of(peer.ip), SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!s) throw Error(Errc::ConnectFailed, errno_text("socket"));
    tune_udp(s.fd());
    sockaddr_storage ss;
    socklen_t len = peer.to_sockaddr(ss);
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&ss), len) != 0)
        throw Error(Errc::ConnectFailed, errno_text(("connect udp " + peer.to_string()).c_str()));
    return s;
}

SocketAddress local_address(int fd)
{
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len) != 0)
        throw Error(Errc::IoFailure, errno_text("getsockname"));
    return SocketAddress::from_sockaddr(reinterpret_cast<sockaddr*>(&ss));
}

bool wait_readable(int fd, Millis timeout)
{
    pollfd pfd{fd, POLLIN, 0};
    for (;;) {
        int n = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (n < 0 && errno == EINTR) continue;
        return n > 0;
    }
}

void send_all(int fd, ByteView data)
{
    std::size_t off = 0;
    while (off < data.size()) {
        ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::IoFailure, errno_text("send"));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::size_t recv_some(int fd, std::span<std::uint8_t> buf)
{
    for (;;) {
        ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::IoFailure, errno_text("recv"));
        }
        return static_cast<std::size_t>(n);
    }
}

void set_nonblocking(int fd, bool on)
{
    int flags = ::fcntl(fd, F_GETFL, 0);
    if (on) flags |= O_NONBLOCK;
    else flags &= ~O_NONBLOCK;
    ::fcntl(fd, F_SETFL, flags);
}

} // namespace zr::net
