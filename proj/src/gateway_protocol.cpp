#include "zr/gateway_protocol.hpp"

#include <array>

#include "zr/error.hpp"

namespace zr::gw {

std::size_t encoded_size(const Header& h)
{
    return 2 + 3 + (h.destination.ip.is_v6() ? 16 : 4) + 2;
}

ByteVec encode_header(const Header& h)
{
    ByteVec out;
    const auto ip = h.destination.ip.bytes();
    put_u16(out, static_cast<std::uint16_t>(3 + ip.size() + 2));
    put_u8(out, kVersion);
    put_u8(out, h.transport == Transport::Tcp ? 0 : 1);
    put_u8(out, h.destination.ip.is_v6() ? 6 : 4);
    append(out, ip);
    put_u16(out, h.destination.port);
    return out;
}

std::optional<std::pair<Header, std::size_t>> decode_header(ByteView data)
{
    Reader r(data);
    std::uint16_t len = r.u16();
    if (!r.ok() || r.remaining() < len) return std::nullopt;
    Reader body(r.bytes(len));
    std::uint8_t version = body.u8();
    std::uint8_t transport = body.u8();
    std::uint8_t family = body.u8();
    if (!body.ok() || version != kVersion) throw Error(Errc::ParseFailure, "unsupported gateway header version");
    if (transport > 1) throw Error(Errc::ParseFailure, "bad gateway transport");
    Header h;
    h.transport = transport == 0 ? Transport::Tcp : Transport::Udp;
    if (family == 4) {
        std::array<std::uint8_t, 4> a{};
        auto b = body.bytes(4);
        if (body.ok()) std::copy(b.begin(), b.end(), a.begin());
        h.destination.ip = net::IpAddress::v4(a);
    } else if (family == 6) {
        std::array<std::uint8_t, 16> a{};
        auto b = body.bytes(16);
        if (body.ok()) std::copy(b.begin(), b.end(), a.begin());
        h.destination.ip = net::IpAddress::v6(a);
    } else {
        throw Error(Errc::ParseFailure, "bad gateway address family");
    }
    h.destination.port = body.u16();
    if (!body.ok() || !body.empty()) throw Error(Errc::ParseFailure, "gateway header length mismatch");
    return std::make_pair(h, std::size_t{2} + len);
}

} // namespace zr::gw
