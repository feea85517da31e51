#include "zr/bytes.hpp"
#include "zr/error.hpp"

namespace zr {

std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::GranularityTooCoarse: return "GranularityTooCoarse";
    case Errc::PlanTooLarge: return "PlanTooLarge";
    case Errc::ControlNotBilled: return "ControlNotBilled";
    case Errc::UnattributableDelta: return "UnattributableDelta";
    case Errc::NegativeDelta: return "NegativeDelta";
    case Errc::ConnectFailed: return "ConnectFailed";
    case Errc::ProtocolUnsupported: return "ProtocolUnsupported";
    case Errc::ProvisionFailed: return "ProvisionFailed";
    case Errc::RateLimited: return "RateLimited";
    case Errc::SourceUnavailable: return "SourceUnavailable";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::Timeout: return "Timeout";
    case Errc::BindFailed: return "BindFailed";
    case Errc::InsufficientEvidence: return "InsufficientEvidence";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

std::string to_hex(ByteView data)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

ByteVec from_hex(std::string_view hex)
{
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    ByteVec out;
    out.reserve(hex.size() / 2);
    int hi = -1;
    for (char c : hex) {
        if (c == ' ' || c == '\n' || c == '\t') continue;
        int v = nibble(c);
        if (v < 0) throw Error(Errc::ParseFailure, "invalid hex digit");
        if (hi < 0) {
            hi = v;
        } else {
            out.push_back(static_cast<std::uint8_t>((hi << 4) | v));
            hi = -1;
        }
    }
    if (hi >= 0) throw Error(Errc::ParseFailure, "odd-length hex string");
    return out;
}

bool Reader::need(std::size_t n)
{
    if (!ok_ || data_.size() - pos_ < n) {
        ok_ = false;
        return false;
    }
    return true;
}

std::uint8_t Reader::u8()
{
    if (!need(1)) return 0;
    return data_[pos_++];
}

std::uint16_t Reader::u16()
{
    if (!need(2)) return 0;
    std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

std::uint32_t Reader::u24()
{
    if (!need(3)) return 0;
    std::uint32_t v = (std::uint32_t{data_[pos_]} << 16) | (std::uint32_t{data_[pos_ + 1]} << 8) | data_[pos_ + 2];
    pos_ += 3;
    return v;
}

std::uint32_t Reader::u32()
{
    if (!need(4)) return 0;
    std::uint32_t v = (std::uint32_t{data_[pos_]} << 24) | (std::uint32_t{data_[pos_ + 1]} << 16) |
                      (std::uint32_t{data_[pos_ + 2]} << 8) | data_[pos_ + 3];
    pos_ += 4;
    return v;
}

std::uint64_t Reader::varint()
{
    if (!need(1)) return 0;
    std::size_t len = std::size_t{1} << (data_[pos_] >> 6);
    if (!need(len)) return 0;
    std::uint64_t v = data_[pos_] & 0x3f;
    for (std::size_t i = 1; i < len; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += len;
    return v;
}

ByteView Reader::bytes(std::size_t n)
{
    if (!need(n)) return {};
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
}

std::size_t varint_size(std::uint64_t v)
{
    if (v < (1ull << 6)) return 1;
    if (v < (1ull << 14)) return 2;
    if (v < (1ull << 30)) return 4;
    return 8;
}

void put_varint(ByteVec& out, std::uint64_t v)
{
    if (v >= (1ull << 62)) throw Error(Errc::InvalidArgument, "varint out of range");
    std::size_t len = varint_size(v);
    std::uint8_t prefix = len == 1 ? 0x00 : len == 2 ? 0x40 : len == 4 ? 0x80 : 0xc0;
    for (std::size_t i = 0; i < len; ++i) {
        std::uint8_t b = static_cast<std::uint8_t>(v >> (8 * (len - 1 - i)));
        if (i == 0) b = static_cast<std::uint8_t>((b & 0x3f) | prefix);
        out.push_back(b);
    }
}

} // namespace zr
