#include "zr/quic_initial.hpp"

#include <algorithm>

#include "zr/crypto.hpp"
#include "zr/error.hpp"

namespace zr::quic {

namespace {

constexpr std::uint8_t kInitialSaltV1[] = {0x38, 0x76, 0x2c, 0xf7, 0xf5, 0x59, 0x34, 0xb3, 0x4d, 0x17,
                                           0x9a, 0xe6, 0xa4, 0xc8, 0x0c, 0xad, 0xcc, 0xbb, 0x7f, 0x0a};

ByteVec make_nonce(const ByteVec& iv, std::uint64_t pn)
{
    ByteVec nonce = iv;
    for (std::size_t i = 0; i < 8; ++i) nonce[nonce.size() - 1 - i] ^= static_cast<std::uint8_t>(pn >> (8 * i));
    return nonce;
}

} // namespace

PacketKeys derive_packet_keys(ByteView secret)
{
    return PacketKeys{crypto::hkdf_expand_label(secret, "quic key", {}, 16),
                      crypto::hkdf_expand_label(secret, "quic iv", {}, 12),
                      crypto::hkdf_expand_label(secret, "quic hp", {}, 16)};
}

InitialSecrets derive_initial_secrets(ByteView client_dcid)
{
    InitialSecrets s;
    s.initial_secret = crypto::hkdf_extract_sha256(kInitialSaltV1, client_dcid);
    s.client_secret = crypto::hkdf_expand_label(s.initial_secret, "client in", {}, 32);
    s.server_secret = crypto::hkdf_expand_label(s.initial_secret, "server in", {}, 32);
    s.client = derive_packet_keys(s.client_secret);
    s.server = derive_packet_keys(s.server_secret);
    return s;
}

std::optional<LongHeaderInfo> parse_long_header(ByteView datagram)
{
    Reader r(datagram);
    std::uint8_t first = r.u8();
    if (!r.ok() || (first & 0x80) == 0 || (first & 0x40) == 0) return std::nullopt;
    LongHeaderInfo info;
    info.type = static_cast<LongType>((first >> 4) & 0x03);
    info.version = r.u32();
    if (!r.ok() || info.version == 0) return std::nullopt;
    std::uint8_t dcid_len = r.u8();
    if (dcid_len > 20) return std::nullopt;
    auto dcid = r.bytes(dcid_len);
    std::uint8_t scid_len = r.u8();
    if (scid_len > 20) return std::nullopt;
    auto scid = r.bytes(scid_len);
    if (!r.ok()) return std::nullopt;
    info.dcid.assign(dcid.begin(), dcid.end());
    info.scid.assign(scid.begin(), scid.end());
    if (info.type == LongType::Retry) return std::nullopt;
    if (info.type == LongType::Initial) {
        auto token_len = r.varint();
        if (!r.ok() || token_len > r.remaining()) return std::nullopt;
        auto token = r.bytes(static_cast<std::size_t>(token_len));
        info.token.assign(token.begin(), token.end());
    }
    auto length = r.varint();
    if (!r.ok() || length > r.remaining() || length < 20) return std::nullopt;
    info.pn_offset = r.position();
    info.packet_end = info.pn_offset + static_cast<std::size_t>(length);
    return info;
}

std::optional<OpenedPacket> open_long_packet(ByteView datagram, const PacketKeys& keys)
{
    auto info = parse_long_header(datagram);
    if (!info) return std::nullopt;
    const std::size_t sample_offset = info->pn_offset + 4;
    if (sample_offset + 16 > info->packet_end) return std::nullopt;
    auto mask = crypto::aes128_ecb_block(keys.hp, datagram.subspan(sample_offset, 16));

    ByteVec header(datagram.begin(), datagram.begin() + static_cast<std::ptrdiff_t>(info->pn_offset));
    header[0] ^= mask[0] & 0x0f;
    const std::size_t pn_length = (header[0] & 0x03) + 1u;
    std::uint64_t pn = 0;
    for (std::size_t i = 0; i < pn_length; ++i) {
        std::uint8_t b = datagram[info->pn_offset + i] ^ mask[1 + i];
        header.push_back(b);
        pn = (pn << 8) | b;
    }
    auto sealed = datagram.subspan(info->pn_offset + pn_length, info->packet_end - info->pn_offset - pn_length);
    auto plain = crypto::aes128_gcm_open(keys.key, make_nonce(keys.iv, pn), header, sealed);
    if (!plain) return std::nullopt;
    OpenedPacket out;
    out.info = std::move(*info);
    out.packet_number = pn;
    out.header = std::move(header);
    out.payload = std::move(*plain);
    return out;
}

ByteVec seal_packet(ByteView header, std::size_t pn_length, std::uint64_t packet_number, ByteView payload,
                    const PacketKeys& keys, bool long_header)
{
    if (pn_length < 1 || pn_length > 4 || header.size() < pn_length + 1)
        throw Error(Errc::InvalidArgument, "bad packet number length");
    ByteVec out(header.begin(), header.end());
    auto sealed = crypto::aes128_gcm_seal(keys.key, make_nonce(keys.iv, packet_number), header, payload);
    append(out, sealed);

    const std::size_t pn_offset = header.size() - pn_length;
    const std::size_t sample_offset = pn_offset + 4;
    if (sample_offset + 16 > out.size()) throw Error(Errc::InvalidArgument, "payload too short to sample");
    auto mask = crypto::aes128_ecb_block(keys.hp, ByteView(out).subspan(sample_offset, 16));
    out[0] ^= mask[0] & (long_header ? 0x0f : 0x1f);
    for (std::size_t i = 0; i < pn_length; ++i) out[pn_offset + i] ^= mask[1 + i];
    return out;
}

ByteVec build_client_initial(ByteView dcid, ByteView scid, std::uint64_t packet_number, ByteView crypto_data)
{
    constexpr std::size_t pn_length = 4;
    ByteVec frames;
    put_u8(frames, 0x06); // CRYPTO
    put_varint(frames, 0);
    put_varint(frames, crypto_data.size());
    append(frames, crypto_data);

    auto header_for = [&](std::size_t payload_len) {
        ByteVec h;
        put_u8(h, static_cast<std::uint8_t>(0xc0 | (pn_length - 1)));
        put_u32(h, kVersion1);
        put_u8(h, static_cast<std::uint8_t>(dcid.size()));
        append(h, dcid);
        put_u8(h, static_cast<std::uint8_t>(scid.size()));
        append(h, scid);
        put_varint(h, 0); // token length
        // Two-byte length encoding keeps the header size independent of padding.
        std::uint64_t length = pn_length + payload_len + 16;
        put_u16(h, static_cast<std::uint16_t>(0x4000 | length));
        put_u32(h, static_cast<std::uint32_t>(packet_number));
        return h;
    };

    std::size_t header_len = header_for(frames.size()).size();
    std::size_t total = header_len + frames.size() + 16;
    if (total < kMinInitialDatagram) frames.resize(frames.size() + (kMinInitialDatagram - total), 0x00);
    if (frames.size() + pn_length + 16 >= 0x4000) throw Error(Errc::InvalidArgument, "ClientHello too large");
    return seal_packet(header_for(frames.size()), pn_length, packet_number, frames, derive_initial_secrets(dcid).client);
}

std::optional<std::vector<CryptoChunk>> crypto_frames(ByteView payload)
{
    std::vector<CryptoChunk> chunks;
    Reader r(payload);
    while (!r.empty()) {
        std::uint64_t type = r.varint();
        if (!r.ok()) return std::nullopt;
        switch (type) {
        case 0x00: // PADDING
        case 0x01: // PING
            break;
        case 0x02:
        case 0x03: { // ACK
            r.varint();
            r.varint();
            std::uint64_t ranges = r.varint();
            r.varint();
            for (std::uint64_t i = 0; i < ranges && r.ok(); ++i) {
                r.varint();
                r.varint();
            }
            if (type == 0x03) {
                r.varint();
                r.varint();
                r.varint();
            }
            break;
        }
        case 0x06: { // CRYPTO
            std::uint64_t offset = r.varint();
            std::uint64_t len = r.varint();
            if (!r.ok() || len > r.remaining()) return std::nullopt;
            auto data = r.bytes(static_cast<std::size_t>(len));
            chunks.push_back({offset, ByteVec(data.begin(), data.end())});
            break;
        }
        case 0x1c: { // CONNECTION_CLOSE
            r.varint();
            r.varint();
            std::uint64_t len = r.varint();
            if (!r.ok() || len > r.remaining()) return std::nullopt;
            r.skip(static_cast<std::size_t>(len));
            break;
        }
        default:
            return std::nullopt;
        }
        if (!r.ok()) return std::nullopt;
    }
    return chunks;
}

std::optional<ByteVec> collect_crypto_stream(ByteView payload)
{
    auto chunks = crypto_frames(payload);
    if (!chunks) return std::nullopt;
    std::sort(chunks->begin(), chunks->end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
    ByteVec out;
    for (auto& c : *chunks) {
        if (c.offset > out.size()) break;
        std::size_t skip = out.size() - static_cast<std::size_t>(c.offset);
        if (skip < c.data.size()) out.insert(out.end(), c.data.begin() + static_cast<std::ptrdiff_t>(skip), c.data.end());
    }
    return out;
}

} // namespace zr::quic
