#include "zr/protocol.hpp"

#include <algorithm>
#include <cctype>

namespace zr {

std::string_view to_string(Protocol p) noexcept
{
    switch (p) {
    case Protocol::Http: return "HTTP";
    case Protocol::Https: return "HTTPS";
    case Protocol::Http3: return "HTTP3";
    }
    return "?";
}

std::optional<Protocol> parse_protocol(std::string_view s) noexcept
{
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "http") return Protocol::Http;
    if (lower == "https") return Protocol::Https;
    if (lower == "http3" || lower == "h3") return Protocol::Http3;
    return std::nullopt;
}

std::string FlowClass::to_string() const
{
    return std::string(zr::to_string(protocol)) + "/" + std::string(net::to_string(ip_version));
}

std::optional<FlowClass> FlowClass::parse(std::string_view s)
{
    auto slash = s.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    auto p = parse_protocol(s.substr(0, slash));
    auto v = net::parse_ip_version(s.substr(slash + 1));
    if (!p || !v) return std::nullopt;
    return FlowClass{*p, *v};
}

FlowClassSet FlowClassSet::of_version(net::IpVersion v)
{
    FlowClassSet s;
    for (auto p : kAllProtocols) s.insert({p, v});
    return s;
}

FlowClassSet FlowClassSet::of_protocol(Protocol p)
{
    FlowClassSet s;
    for (auto v : kAllIpVersions) s.insert({p, v});
    return s;
}

std::vector<FlowClass> FlowClassSet::members() const
{
    std::vector<FlowClass> out;
    for (unsigned i = 0; i < 6; ++i)
        if (bits_.test(i)) out.push_back(FlowClass::from_index(i));
    return out;
}

std::optional<FlowClassSet> FlowClassSet::parse_named(std::string_view s)
{
    if (s == "all") return all();
    if (s == "ipv4-only") return of_version(net::IpVersion::V4);
    if (s == "ipv6-only") return of_version(net::IpVersion::V6);
    if (s == "https-only") return of_protocol(Protocol::Https);
    if (s == "tcp-only") return all() - of_protocol(Protocol::Http3);
    return std::nullopt;
}

} // namespace zr
