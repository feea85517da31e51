#pragma once

// QUIC version 1 Initial packet protection: key derivation from the client's
// destination connection ID plus AEAD and header protection of long-header
// packets.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "zr/bytes.hpp"

namespace zr::quic {

inline constexpr std::uint32_t kVersion1 = 0x00000001;
inline constexpr std::size_t kMinInitialDatagram = 1200;

struct PacketKeys {
    ByteVec key; // 16 bytes
    ByteVec iv;  // 12 bytes
    ByteVec hp;  // 16 bytes
};

struct InitialSecrets {
    ByteVec initial_secret;
    ByteVec client_secret;
    ByteVec server_secret;
    PacketKeys client;
    PacketKeys server;
};

InitialSecrets derive_initial_secrets(ByteView client_dcid);
PacketKeys derive_packet_keys(ByteView traffic_secret);

enum class LongType : std::uint8_t { Initial = 0, ZeroRtt = 1, Handshake = 2, Retry = 3 };

/// Cleartext fields of a long header, readable before removing protection.
struct LongHeaderInfo {
    LongType type = LongType::Initial;
    std::uint32_t version = 0;
    ByteVec dcid;
    ByteVec scid;
    ByteVec token;
    /// Offset of the (protected) packet number field.
    std::size_t pn_offset = 0;
    /// pn_offset + value of the Length field; end of this packet within the datagram.
    std::size_t packet_end = 0;
};

std::optional<LongHeaderInfo> parse_long_header(ByteView datagram);

struct OpenedPacket {
    LongHeaderInfo info;
    std::uint64_t packet_number = 0;
    /// Header with protection removed (through the packet number).
    ByteVec header;
    ByteVec payload;
};

/// Removes header protection and decrypts the first long-header packet of
/// `datagram`. Returns nullopt on any malformation or authentication failure.
std::optional<OpenedPacket> open_long_packet(ByteView datagram, const PacketKeys& keys);

/// Protects a packet given its cleartext header (packet number included,
/// encoded in `pn_length` bytes ending the header) and plaintext payload.
ByteVec seal_packet(ByteView header, std::size_t pn_length, std::uint64_t packet_number, ByteView payload,
                    const PacketKeys& keys, bool long_header = true);

/// Builds a protected client Initial carrying `crypto_data` in a CRYPTO frame
/// at offset 0, padded so the datagram is at least kMinInitialDatagram bytes.
ByteVec build_client_initial(ByteView dcid, ByteView scid, std::uint64_t packet_number, ByteView crypto_data);

struct CryptoChunk {
    std::uint64_t offset = 0;
    ByteVec data;
};

/// CRYPTO frames of a decrypted Initial payload (PADDING, PING, ACK and
/// CONNECTION_CLOSE are skipped); nullopt on malformed or unexpected frames.
std::optional<std::vector<CryptoChunk>> crypto_frames(ByteView payload);

/// Concatenates CRYPTO frame data contiguous from offset 0 out of a decrypted
/// Initial payload; nullopt if a frame is malformed or unknown.
std::optional<ByteVec> collect_crypto_stream(ByteView payload);

} // namespace zr::quic
