#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zr/net.hpp"
#include "zr/protocol.hpp"

namespace zr {

/// An application web endpoint and the static resource fetched from it.
struct EndpointSpec {
    std::string application;
    std::string hostname;
    std::string resource_path;
    std::vector<net::IpAddress> addresses_v4;
    std::vector<net::IpAddress> addresses_v6;
    std::vector<Protocol> protocols;
    /// Body size served by the simulated origin; ignored for real endpoints.
    std::uint64_t resource_size = 48 * 1024;

    const std::vector<net::IpAddress>& addresses(net::IpVersion v) const
    {
        return v == net::IpVersion::V4 ? addresses_v4 : addresses_v6;
    }
    bool supports(Protocol p) const;
    /// Throws Error{ConfigInvalid}.
    void validate() const;
    bool operator==(const EndpointSpec&) const = default;
};

nlohmann::json to_json(const EndpointSpec& e);
EndpointSpec endpoint_from_json(const nlohmann::json& j);

/// The endpoints probed for WhatsApp, Snapchat and Messenger/Facebook, placed
/// on documentation-range addresses for the simulator.
std::vector<EndpointSpec> builtin_endpoints();
/// Third-party endpoint that no zero-rating rule covers.
EndpointSpec builtin_control_endpoint();

} // namespace zr
