#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <thread>

#include "support/test_support.hpp"
#include "zr/crypto.hpp"
#include "zr/error.hpp"
#include "zr/forwarder.hpp"
#include "zr/server.hpp"

using namespace zr;
using namespace std::chrono_literals;
using net::IpAddress;
using net::IpVersion;
using net::SocketAddress;
using zr::testing::code_of;
using zr::testing::seeded_rng;

namespace {

const SocketAddress kLoop4{IpAddress::loopback(IpVersion::V4), 0};

/// TCP server that echoes everything back.
std::unique_ptr<net::TcpServer> echo_server()
{
    return std::make_unique<net::TcpServer>(kLoop4, [](net::Socket& s) {
        std::uint8_t buf[16384];
        try {
            while (true) {
                auto n = net::recv_some(s.fd(), buf);
                if (n == 0) return;
                net::send_all(s.fd(), ByteView(buf, n));
            }
        } catch (const Error&) {
        }
    });
}

/// UDP server that answers each datagram with "<len>:<payload>".
class UdpEcho {
public:
    UdpEcho() : sock_(net::udp_bind(kLoop4)), addr_(net::local_address(sock_.fd()))
    {
        thread_ = std::thread([this] {
            ByteVec buf(65536);
            while (!stop_) {
                if (!net::wait_readable(sock_.fd(), 50ms)) continue;
                sockaddr_storage ss{};
                socklen_t sl = sizeof(ss);
                auto got = ::recvfrom(sock_.fd(), buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&ss), &sl);
                if (got < 0) continue;
                ::sendto(sock_.fd(), buf.data(), static_cast<std::size_t>(got), 0, reinterpret_cast<sockaddr*>(&ss), sl);
            }
        });
    }
    ~UdpEcho()
    {
        stop_ = true;
        thread_.join();
    }
    SocketAddress address() const { return addr_; }

private:
    net::Socket sock_;
    SocketAddress addr_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

ByteVec random_payload(std::mt19937_64& rng, std::size_t n)
{
    ByteVec out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

/// Sends `data` and reads back the same number of bytes.
ByteVec tcp_roundtrip(const SocketAddress& to, ByteView data)
{
    auto s = net::tcp_connect(to);
    std::thread writer([&] {
        net::send_all(s.fd(), data);
        ::shutdown(s.fd(), SHUT_WR);
    });
    ByteVec got;
    std::uint8_t buf[16384];
    while (got.size() < data.size()) {
        if (!net::wait_readable(s.fd(), 5000ms)) break;
        auto n = net::recv_some(s.fd(), buf);
        if (n == 0) break;
        got.insert(got.end(), buf, buf + n);
    }
    writer.join();
    return got;
}

std::optional<ByteVec> udp_roundtrip(net::Socket& s, const SocketAddress& to, ByteView data)
{
    sockaddr_storage ss{};
    auto sl = to.to_sockaddr(ss);
    ::sendto(s.fd(), data.data(), data.size(), 0, reinterpret_cast<sockaddr*>(&ss), sl);
    if (!net::wait_readable(s.fd(), 2000ms)) return std::nullopt;
    ByteVec buf(65536);
    auto n = ::recv(s.fd(), buf.data(), buf.size(), 0);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return buf;
}

fwd::ForwarderSpec spec_for(const SocketAddress& tcp_origin, const std::optional<SocketAddress>& udp_origin = std::nullopt)
{
    fwd::ForwarderSpec spec;
    spec.port_maps.push_back({Transport::Tcp, 0, tcp_origin});
    if (udp_origin) spec.port_maps.push_back({Transport::Udp, 0, *udp_origin});
    return spec;
}

SocketAddress listen_of(const fwd::Forwarder& f, Transport t, std::uint16_t origin_port)
{
    return {f.address(), f.port_for(t, origin_port).value()};
}

} // namespace

TEST(Forwarder, TcpRelayIsByteTransparent)
{
    auto echo = echo_server();
    auto f = fwd::provision(spec_for(echo->local_address()), {});
    auto rng = seeded_rng(40);
    for (std::size_t n : {std::size_t{1}, std::size_t{1000}, std::size_t{65536}, std::size_t{1 << 20}}) {
        auto data = random_payload(rng, n);
        auto via = tcp_roundtrip(listen_of(*f, Transport::Tcp, echo->local_address().port), data);
        ASSERT_EQ(crypto::sha256(via), crypto::sha256(data)) << n;
    }
}

TEST(Forwarder, HundredConcurrentTcpConnections)
{
    auto echo = echo_server();
    auto f = fwd::provision(spec_for(echo->local_address()), {});
    const auto to = listen_of(*f, Transport::Tcp, echo->local_address().port);
    std::vector<std::future<bool>> results;
    for (int i = 0; i < 100; ++i)
        results.push_back(std::async(std::launch::async, [to, i] {
            auto rng = seeded_rng(100 + i);
            auto data = random_payload(rng, 20000 + i * 37);
            return tcp_roundtrip(to, data) == data;
        }));
    int ok = 0;
    for (auto& r : results) ok += r.get();
    EXPECT_EQ(ok, 100);
}

TEST(Forwarder, UdpMappingPerClientAndIdleExpiry)
{
    auto echo = echo_server();
    UdpEcho uecho;
    auto spec = spec_for(echo->local_address(), uecho.address());
    spec.udp_idle_expiry = 300ms;
    fwd::Relay relay(spec);
    const SocketAddress to{spec.listen_address, relay.bound()[1].listen_port};
    auto a = net::udp_bind(kLoop4), b = net::udp_bind(kLoop4);
    auto rng = seeded_rng(41);
    for (int i = 0; i < 20; ++i) {
        auto d = random_payload(rng, 1 + rng() % 1400);
        ASSERT_EQ(udp_roundtrip(i % 2 ? a : b, to, d), d);
    }
    EXPECT_EQ(relay.udp_mappings(), 2u);
    std::this_thread::sleep_for(600ms);
    EXPECT_EQ(relay.udp_mappings(), 0u);
    auto d = random_payload(rng, 100);
    EXPECT_EQ(udp_roundtrip(a, to, d), d);
    EXPECT_EQ(relay.udp_mappings(), 1u);
}

TEST(Forwarder, TeardownIsIdempotentAndClosesPorts)
{
    auto echo = echo_server();
    auto f = fwd::provision(spec_for(echo->local_address()), {});
    const auto to = listen_of(*f, Transport::Tcp, echo->local_address().port);
    f->teardown();
    f->teardown();
    EXPECT_EQ(code_of([&] { net::tcp_connect(to, 500ms); }), Errc::ConnectFailed);
}

TEST(Forwarder, LifetimeExpires)
{
    auto echo = echo_server();
    auto spec = spec_for(echo->local_address());
    spec.lifetime = 200ms;
    auto f = fwd::provision(spec, {});
    const auto to = listen_of(*f, Transport::Tcp, echo->local_address().port);
    EXPECT_NO_THROW(net::tcp_connect(to, 500ms));
    std::this_thread::sleep_for(500ms);
    EXPECT_EQ(code_of([&] { net::tcp_connect(to, 500ms); }), Errc::ConnectFailed);
}

TEST(Forwarder, DialMapTranslatesVirtualOrigin)
{
    auto echo = echo_server();
    const auto virt = SocketAddress::parse("192.0.2.10:443").value();
    auto spec = spec_for(virt);
    spec.dial.add(virt, Transport::Tcp, echo->local_address());
    auto f = fwd::provision(spec, {});
    ByteVec data = {1, 2, 3, 4, 5};
    EXPECT_EQ(tcp_roundtrip(listen_of(*f, Transport::Tcp, 443), data), data);
}

TEST(Forwarder, ArgumentsRoundTrip)
{
    auto spec = spec_for(SocketAddress::parse("192.0.2.10:443").value(), SocketAddress::parse("[2001:db8::1]:443").value());
    spec.dial.add(SocketAddress::parse("192.0.2.10:443").value(), Transport::Tcp, SocketAddress::parse("127.0.0.1:9").value());
    auto args = fwd::relay_arguments(spec);
    ASSERT_GE(args.size(), 7u);
    EXPECT_EQ(args[0], "relay");
    EXPECT_EQ(fwd::parse_port_map(args[4]), spec.port_maps[0]);
    EXPECT_EQ(fwd::parse_port_map(args[6]), spec.port_maps[1]);
    transport::DialMap dm;
    EXPECT_TRUE(fwd::parse_dial_entry(args[8], dm));
    EXPECT_EQ(dm.resolve(SocketAddress::parse("192.0.2.10:443").value(), Transport::Tcp),
              SocketAddress::parse("127.0.0.1:9"));
    EXPECT_FALSE(fwd::parse_port_map("sctp:1=127.0.0.1:2").has_value());
    EXPECT_FALSE(fwd::parse_port_map("tcp:70000=127.0.0.1:2").has_value());
    EXPECT_FALSE(fwd::parse_port_map("tcp:1=nowhere").has_value());
}

TEST(Forwarder, CommandProvisionerRunsRelayBinary)
{
    auto echo = echo_server();
    UdpEcho uecho;
    fwd::ProvisionerSpec prov{fwd::ProvisionerKind::RemoteCommand, {ZR_AUDIT_BIN}};
    auto f = fwd::provision(spec_for(echo->local_address(), uecho.address()), prov);
    ASSERT_EQ(f->bound().size(), 2u);
    auto rng = seeded_rng(42);
    auto data = random_payload(rng, 300000);
    EXPECT_EQ(tcp_roundtrip(listen_of(*f, Transport::Tcp, echo->local_address().port), data), data);
    auto s = net::udp_bind(kLoop4);
    auto d = random_payload(rng, 1200);
    EXPECT_EQ(udp_roundtrip(s, listen_of(*f, Transport::Udp, uecho.address().port), d), d);
    f->teardown();
    f->teardown();
}

TEST(Forwarder, CommandProvisionerFailures)
{
    auto echo = echo_server();
    fwd::ProvisionerSpec missing{fwd::ProvisionerKind::RemoteCommand, {"/nonexistent/relay-binary"}};
    EXPECT_EQ(code_of([&] { fwd::provision(spec_for(echo->local_address()), missing); }), Errc::ProvisionFailed);
    fwd::ProvisionerSpec silent{fwd::ProvisionerKind::RemoteCommand, {"/bin/true"}};
    EXPECT_EQ(code_of([&] { fwd::provision(spec_for(echo->local_address()), silent); }), Errc::ProvisionFailed);
    EXPECT_EQ(code_of([&] { fwd::provision(fwd::ForwarderSpec{}, {}); }), Errc::ProvisionFailed);
}
