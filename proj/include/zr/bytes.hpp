#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zr {

using ByteVec = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

std::string to_hex(ByteView data);
ByteVec from_hex(std::string_view hex);

inline ByteView as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string_view as_chars(ByteView b)
{
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

inline void append(ByteVec& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

inline void put_u8(ByteVec& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(ByteVec& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u24(ByteVec& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(ByteVec& out, std::uint32_t v)
{
    put_u16(out, static_cast<std::uint16_t>(v >> 16));
    put_u16(out, static_cast<std::uint16_t>(v));
}

/// Bounds-checked big-endian reader. Reads past the end set a sticky failure
/// flag and return zero instead of throwing; callers check ok() once.
class Reader {
public:
    explicit Reader(ByteView data) : data_(data) {}

    std::size_t remaining() const { return ok_ ? data_.size() - pos_ : 0; }
    std::size_t position() const { return pos_; }
    bool ok() const { return ok_; }
    bool empty() const { return remaining() == 0; }

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u24();
    std::uint32_t u32();
    /// QUIC variable-length integer.
    std::uint64_t varint();
    ByteView bytes(std::size_t n);
    void skip(std::size_t n) { bytes(n); }

private:
    bool need(std::size_t n);

    ByteView data_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

/// QUIC variable-length integer encoding (RFC 9000 section 16).
void put_varint(ByteVec& out, std::uint64_t v);
std::size_t varint_size(std::uint64_t v);

} // namespace zr
