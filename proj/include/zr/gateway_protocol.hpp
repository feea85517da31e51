#pragma once

// Framing spoken between a client and the simulated operator gateway.
// See docs/gateway-protocol.md for the byte layout.

#include <cstdint>
#include <optional>
#include <utility>

#include "zr/bytes.hpp"
#include "zr/net.hpp"
#include "zr/protocol.hpp"

namespace zr::gw {

inline constexpr std::uint8_t kVersion = 1;

struct Header {
    Transport transport = Transport::Tcp;
    net::SocketAddress destination;
    bool operator==(const Header&) const = default;
};

ByteVec encode_header(const Header& h);
std::size_t encoded_size(const Header& h);

/// Parses a header at the start of `data`. Returns the header and the number
/// of bytes it occupies, nullopt when more bytes are needed; throws
/// Error{ParseFailure} on a malformed or unsupported header.
std::optional<std::pair<Header, std::size_t>> decode_header(ByteView data);

} // namespace zr::gw
