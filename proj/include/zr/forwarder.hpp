#pragma once

// L4 relay placed outside the operator so host-probe traffic carries the
// real hostname towards a third-party address.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "zr/server.hpp"
#include "zr/transport.hpp"

namespace zr::fwd {

struct PortMap {
    Transport transport = Transport::Tcp;
    std::uint16_t listen_port = 0; // 0 picks an ephemeral port
    net::SocketAddress origin;
    bool operator==(const PortMap&) const = default;
};

struct ForwarderSpec {
    net::IpAddress listen_address = net::IpAddress::loopback(net::IpVersion::V4);
    std::vector<PortMap> port_maps;
    /// Zero means until teardown.
    std::chrono::milliseconds lifetime{0};
    std::chrono::milliseconds udp_idle_expiry{std::chrono::minutes(5)};
    /// Applied to origin addresses before dialling; empty dials them as given.
    transport::DialMap dial;
};

enum class ProvisionerKind { LocalProcess, RemoteCommand };

struct ProvisionerSpec {
    ProvisionerKind kind = ProvisionerKind::LocalProcess;
    /// RemoteCommand: argv prefix (e.g. an ssh invocation ending in the relay
    /// binary); the relay arguments are appended.
    std::vector<std::string> command;
};

/// In-process relay for one spec.
class Relay {
public:
    /// Throws Error{ProvisionFailed} when a port cannot be bound.
    explicit Relay(const ForwarderSpec& spec);
    ~Relay();
    Relay(const Relay&) = delete;
    Relay& operator=(const Relay&) = delete;

    /// Port maps with the actual listen ports filled in.
    const std::vector<PortMap>& bound() const { return bound_; }
    std::size_t udp_mappings() const { return udp_mappings_; }
    std::uint64_t tcp_connections() const { return tcp_connections_; }
    void stop();

private:
    void udp_loop(net::Socket listener, PortMap map);

    ForwarderSpec spec_;
    std::vector<PortMap> bound_;
    std::vector<std::unique_ptr<net::TcpServer>> tcp_;
    std::vector<std::thread> udp_threads_;
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> udp_mappings_{0};
    std::atomic<std::uint64_t> tcp_connections_{0};
};

/// Handle to a provisioned relay. teardown() is idempotent.
class Forwarder {
public:
    virtual ~Forwarder() = default;
    virtual net::IpAddress address() const = 0;
    virtual const std::vector<PortMap>& bound() const = 0;
    virtual void teardown() = 0;

    /// Listen port relaying to `origin_port` over `t`.
    std::optional<std::uint16_t> port_for(Transport t, std::uint16_t origin_port) const;
};

/// Throws Error{ProvisionFailed}.
std::unique_ptr<Forwarder> provision(const ForwarderSpec& spec, const ProvisionerSpec& provider);

/// Command-line form of a spec, understood by `zr-audit relay`.
std::vector<std::string> relay_arguments(const ForwarderSpec& spec);
/// Parses "tcp:LISTEN=ORIGIN" (and "udp:...") map arguments.
std::optional<PortMap> parse_port_map(std::string_view text);
/// Parses "tcp:VIRTUAL=REAL" dial arguments.
bool parse_dial_entry(std::string_view text, transport::DialMap& into);

} // namespace zr::fwd
