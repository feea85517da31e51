#pragma once

// Middlebox-style hostname extraction from the first bytes of a flow.
// Every extractor returns nullopt on any parse failure; a returned name is
// always a syntactically valid, lower-cased DNS name that occurs in the input.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "zr/bytes.hpp"
#include "zr/protocol.hpp"

namespace zr::dpi {

bool is_valid_hostname(std::string_view name) noexcept;

/// Host header of the first HTTP/1.x request.
std::optional<std::string> extract_http_host(ByteView stream);

/// SNI from a TLS ClientHello carried in one or more handshake records.
std::optional<std::string> extract_tls_sni(ByteView stream);

/// SNI from a bare ClientHello handshake message (no record layer).
std::optional<std::string> sni_from_client_hello(ByteView handshake);

/// SNI from the ClientHello inside QUIC v1 Initial packets. CRYPTO data of
/// all Initials sharing the first packet's DCID is reassembled.
std::optional<std::string> extract_quic_sni(std::span<const ByteVec> datagrams);
std::optional<std::string> extract_quic_sni(ByteView datagram);

/// Dispatches on protocol. For Http3, `bytes` is a single datagram.
std::optional<std::string> extract_hostname(Protocol protocol, ByteView bytes);

} // namespace zr::dpi
