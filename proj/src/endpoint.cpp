#include "zr/endpoint.hpp"

#include <algorithm>

#include "zr/error.hpp"
#include "zr/hostname_extract.hpp"

namespace zr {

using nlohmann::json;

bool EndpointSpec::supports(Protocol p) const
{
    return std::find(protocols.begin(), protocols.end(), p) != protocols.end();
}

void EndpointSpec::validate() const
{
    const std::string who = application.empty() ? hostname : application;
    if (!dpi::is_valid_hostname(hostname)) throw Error(Errc::ConfigInvalid, who + ": invalid hostname");
    if (resource_path.empty() || resource_path[0] != '/')
        throw Error(Errc::ConfigInvalid, who + ": resource_path must start with '/'");
    if (addresses_v4.empty() && addresses_v6.empty()) throw Error(Errc::ConfigInvalid, who + ": no addresses");
    if (protocols.empty()) throw Error(Errc::ConfigInvalid, who + ": no protocols");
    for (const auto& a : addresses_v4)
        if (a.is_v6()) throw Error(Errc::ConfigInvalid, who + ": IPv6 address in addresses_v4");
    for (const auto& a : addresses_v6)
        if (!a.is_v6()) throw Error(Errc::ConfigInvalid, who + ": IPv4 address in addresses_v6");
}

json to_json(const EndpointSpec& e)
{
    json v4 = json::array(), v6 = json::array(), protos = json::array();
    for (const auto& a : e.addresses_v4) v4.push_back(a.to_string());
    for (const auto& a : e.addresses_v6) v6.push_back(a.to_string());
    for (auto p : e.protocols) protos.push_back(std::string(to_string(p)));
    return {{"application", e.application}, {"hostname", e.hostname}, {"resource_path", e.resource_path},
            {"addresses_v4", v4},           {"addresses_v6", v6},     {"protocols", protos},
            {"resource_size", e.resource_size}};
}

EndpointSpec endpoint_from_json(const json& j)
{
    try {
        EndpointSpec e;
        e.application = j.value("application", "");
        e.hostname = j.at("hostname").get<std::string>();
        e.resource_path = j.at("resource_path").get<std::string>();
        auto addrs = [&](const char* key, std::vector<net::IpAddress>& out) {
            for (const auto& a : j.value(key, json::array())) {
                auto ip = net::IpAddress::parse(a.get<std::string>());
                if (!ip) throw Error(Errc::ConfigInvalid, e.hostname + ": bad address " + a.dump());
                out.push_back(*ip);
            }
        };
        addrs("addresses_v4", e.addresses_v4);
        addrs("addresses_v6", e.addresses_v6);
        for (const auto& p : j.value("protocols", json::array({"HTTP", "HTTPS", "HTTP3"}))) {
            auto proto = parse_protocol(p.get<std::string>());
            if (!proto) throw Error(Errc::ConfigInvalid, e.hostname + ": unknown protocol " + p.dump());
            e.protocols.push_back(*proto);
        }
        e.resource_size = j.value("resource_size", e.resource_size);
        e.validate();
        return e;
    } catch (const json::exception& ex) {
        throw Error(Errc::ConfigInvalid, std::string("endpoint: ") + ex.what());
    }
}

namespace {

EndpointSpec make(const char* app, const char* host, const char* path, const char* v4, const char* v6)
{
    return {app, host, path, {*net::IpAddress::parse(v4)}, {*net::IpAddress::parse(v6)},
            {Protocol::Http, Protocol::Https, Protocol::Http3}};
}

} // namespace

std::vector<EndpointSpec> builtin_endpoints()
{
    return {
        make("WhatsApp", "static.whatsapp.net", "/rsrc.php/v3/yP/r/rYZqPCBaG70.png", "192.0.2.10", "2001:db8:10::10"),
        make("Snapchat", "app.snapchat.com", "/web/deeplink/snapcode", "198.51.100.20", "2001:db8:20::20"),
        make("Messenger/Facebook", "scontent.xx.fbcdn.net", "/favicon.ico", "203.0.113.30", "2001:db8:30::30"),
    };
}

EndpointSpec builtin_control_endpoint()
{
    return make("control", "control.zr-audit.test", "/blob.bin", "198.18.0.200", "2001:db8:ff::200");
}

} // namespace zr
