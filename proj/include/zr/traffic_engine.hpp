#pragma once

// Generates verify / ip-probe / host-probe traffic with exact on-the-wire
// byte accounting (handshakes included, gateway framing excluded).

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "zr/endpoint.hpp"
#include "zr/http_message.hpp"
#include "zr/transport.hpp"

namespace zr::engine {

enum class Experiment { Verify, IpProbe, HostProbe };
inline constexpr Experiment kAllExperiments[] = {Experiment::Verify, Experiment::IpProbe, Experiment::HostProbe};

std::string_view to_string(Experiment e) noexcept;
std::optional<Experiment> parse_experiment(std::string_view s) noexcept;

struct TrafficRecipe {
    Experiment experiment = Experiment::Verify;
    EndpointSpec endpoint;
    Protocol protocol = Protocol::Https;
    net::IpVersion ip_version = net::IpVersion::V4;
    std::uint64_t target_bytes = 0;
    /// Sent in the Host header or SNI.
    std::string presented_hostname;
    std::optional<net::IpAddress> destination_override;
    std::optional<std::uint16_t> port_override;

    static TrafficRecipe verify(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target);
    static TrafficRecipe ip_probe(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target,
                                  const std::string& dummy_hostname = "example.com");
    static TrafficRecipe host_probe(const EndpointSpec& e, Protocol p, net::IpVersion v, std::uint64_t target,
                                    const net::IpAddress& relay, std::optional<std::uint16_t> relay_port);
    /// Throws Error{InvalidArgument} when the experiment's shape rules are broken.
    void validate(const std::string& dummy_hostname = "example.com") const;
};

struct TrafficReport {
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t bytes_total = 0;
    std::uint64_t request_count = 0;
    std::uint64_t dns_lookups = 0;
    std::uint64_t connections = 0;
    std::string protocol_used;
    std::chrono::system_clock::time_point started{};
    std::chrono::system_clock::time_point finished{};
    /// Non-fatal conditions such as non-2xx responses.
    std::vector<std::string> warnings;
};

class Resolver;

/// While alive, `hostname` resolves to the pinned address inside the owning
/// engine. The latest live pin for a name wins.
class PinHandle {
public:
    PinHandle() = default;
    PinHandle(PinHandle&& o) noexcept : resolver_(o.resolver_), token_(o.token_) { o.resolver_ = nullptr; }
    PinHandle& operator=(PinHandle&& o) noexcept;
    ~PinHandle() { release(); }
    void release();

private:
    friend class Resolver;
    PinHandle(Resolver* r, std::uint64_t token) : resolver_(r), token_(token) {}
    Resolver* resolver_ = nullptr;
    std::uint64_t token_ = 0;
};

/// Engine-scoped name resolution: pins, then the endpoint's configured
/// addresses, then the system resolver. Never touches host configuration.
class Resolver {
public:
    PinHandle pin(const std::string& hostname, const net::IpAddress& address);
    /// Counts as one lookup.
    std::vector<net::IpAddress> resolve(const std::string& hostname, net::IpVersion v,
                                        const EndpointSpec* configured = nullptr);
    std::uint64_t lookups() const { return lookups_; }

private:
    friend class PinHandle;
    void unpin(std::uint64_t token);

    std::mutex mu_;
    std::uint64_t next_token_ = 1;
    std::map<std::string, std::vector<std::pair<std::uint64_t, net::IpAddress>>> pins_;
    std::uint64_t lookups_ = 0;
};

struct EngineOptions {
    transport::Route route;
    /// Extra trusted roots for Verify (PEM); empty uses the system store.
    std::string trust_pem;
    std::string dummy_hostname = "example.com";
    /// Connection attempts per HTTP/3 connection.
    unsigned h3_retry_cap = 3;
    net::Millis io_timeout{10000};
    /// Trim the final request with a Range header so a payload overshoots its
    /// target by about `overshoot_margin` bytes instead of a whole response.
    bool range_trim = true;
    std::uint64_t overshoot_margin = 48;
};

struct FetchResult {
    http::Response response;
    TrafficReport report;
};

class TrafficEngine {
public:
    explicit TrafficEngine(EngineOptions options);
    ~TrafficEngine();

    /// Throws Error{ConnectFailed}, Error{ProtocolUnsupported}.
    TrafficReport run_recipe(const TrafficRecipe& recipe);
    /// Fetches the whole resource once (no Range header).
    FetchResult fetch_once(const TrafficRecipe& recipe);
    TrafficReport generate_control_traffic(std::uint64_t control_size, const EndpointSpec& control,
                                           Protocol protocol = Protocol::Https,
                                           net::IpVersion version = net::IpVersion::V4);
    PinHandle pin_hostname(const std::string& hostname, const net::IpAddress& address);
    /// Flow classes for which one request succeeds.
    FlowClassSet probe_endpoint_support(const EndpointSpec& endpoint);

    const EngineOptions& options() const { return options_; }
    Resolver& resolver() { return resolver_; }

    class Connection;

private:
    std::unique_ptr<Connection> open(const TrafficRecipe& recipe, const net::SocketAddress& dest,
                                     TrafficReport& report);
    net::SocketAddress destination(const TrafficRecipe& recipe, TrafficReport& report);

    EngineOptions options_;
    Resolver resolver_;
};

} // namespace zr::engine
