#pragma once

// Thin wrappers over OpenSSL libcrypto for the primitives the QUIC initial
// packet protection needs.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "zr/bytes.hpp"

namespace zr::crypto {

ByteVec hkdf_extract_sha256(ByteView salt, ByteView ikm);
ByteVec hkdf_expand_sha256(ByteView prk, ByteView info, std::size_t length);
/// TLS 1.3 HKDF-Expand-Label with the "tls13 " prefix.
ByteVec hkdf_expand_label(ByteView secret, std::string_view label, ByteView context, std::size_t length);

/// AES-128-GCM; returns ciphertext || 16-byte tag.
ByteVec aes128_gcm_seal(ByteView key, ByteView nonce, ByteView aad, ByteView plaintext);
/// Returns nullopt when the tag does not verify.
std::optional<ByteVec> aes128_gcm_open(ByteView key, ByteView nonce, ByteView aad, ByteView ciphertext_and_tag);

/// Single-block AES-128-ECB encryption (header protection mask).
std::array<std::uint8_t, 16> aes128_ecb_block(ByteView key, ByteView block);

std::array<std::uint8_t, 32> sha256(ByteView data);
void random_bytes(std::span<std::uint8_t> out);

} // namespace zr::crypto
