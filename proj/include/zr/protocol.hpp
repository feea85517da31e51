#pragma once

#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zr/net.hpp"

namespace zr {

enum class Protocol : std::uint8_t { Http, Https, Http3 };

inline constexpr Protocol kAllProtocols[] = {Protocol::Http, Protocol::Https, Protocol::Http3};
inline constexpr net::IpVersion kAllIpVersions[] = {net::IpVersion::V4, net::IpVersion::V6};

std::string_view to_string(Protocol p) noexcept;
std::optional<Protocol> parse_protocol(std::string_view s) noexcept;

enum class Transport : std::uint8_t { Tcp, Udp };

inline Transport transport_of(Protocol p) noexcept { return p == Protocol::Http3 ? Transport::Udp : Transport::Tcp; }
inline std::uint16_t default_port(Protocol p) noexcept { return p == Protocol::Http ? 80 : 443; }

/// Protocol x IP version: the six classes a zero-rating rule can apply to.
struct FlowClass {
    Protocol protocol = Protocol::Http;
    net::IpVersion ip_version = net::IpVersion::V4;

    /// 0..5 ordered HTTP/v4, HTTP/v6, HTTPS/v4, HTTPS/v6, HTTP3/v4, HTTP3/v6.
    unsigned index() const noexcept
    {
        return static_cast<unsigned>(protocol) * 2 + (ip_version == net::IpVersion::V6 ? 1 : 0);
    }
    static FlowClass from_index(unsigned i) noexcept
    {
        return {static_cast<Protocol>(i / 2), i % 2 ? net::IpVersion::V6 : net::IpVersion::V4};
    }
    /// "HTTPS/v4"
    std::string to_string() const;
    static std::optional<FlowClass> parse(std::string_view s);

    bool operator==(const FlowClass&) const = default;
};

class FlowClassSet {
public:
    FlowClassSet() = default;

    static FlowClassSet all() { return FlowClassSet(0x3f); }
    static FlowClassSet none() { return FlowClassSet(0); }
    static FlowClassSet of_version(net::IpVersion v);
    static FlowClassSet of_protocol(Protocol p);
    static FlowClassSet from_bits(unsigned bits) { return FlowClassSet(bits & 0x3f); }

    bool contains(FlowClass c) const noexcept { return bits_.test(c.index()); }
    void insert(FlowClass c) noexcept { bits_.set(c.index()); }
    void erase(FlowClass c) noexcept { bits_.reset(c.index()); }
    bool empty() const noexcept { return bits_.none(); }
    std::size_t size() const noexcept { return bits_.count(); }
    unsigned bits() const noexcept { return static_cast<unsigned>(bits_.to_ulong()); }
    std::vector<FlowClass> members() const;

    FlowClassSet operator|(FlowClassSet o) const { return FlowClassSet(bits() | o.bits()); }
    FlowClassSet operator&(FlowClassSet o) const { return FlowClassSet(bits() & o.bits()); }
    FlowClassSet operator-(FlowClassSet o) const { return FlowClassSet(bits() & ~o.bits()); }
    bool operator==(const FlowClassSet&) const = default;

    /// Vocabulary names: "all", "ipv4-only", "ipv6-only", "https-only",
    /// "tcp-only", or a list of class names.
    static std::optional<FlowClassSet> parse_named(std::string_view s);

private:
    explicit FlowClassSet(unsigned bits) : bits_(bits) {}
    std::bitset<6> bits_;
};

} // namespace zr
