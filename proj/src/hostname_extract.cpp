#include "zr/hostname_extract.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "zr/quic_initial.hpp"

namespace zr::dpi {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::optional<std::string> checked_name(std::string_view raw)
{
    if (!raw.empty() && raw.back() == '.') raw.remove_suffix(1);
    if (!is_valid_hostname(raw)) return std::nullopt;
    return lower(raw);
}

} // namespace

bool is_valid_hostname(std::string_view name) noexcept
{
    if (name.empty() || name.size() > 253) return false;
    std::size_t label_len = 0;
    char prev = '.';
    for (char c : name) {
        if (c == '.') {
            if (label_len == 0 || prev == '-') return false;
            label_len = 0;
        } else {
            bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-';
            if (!ok || (c == '-' && label_len == 0)) return false;
            if (++label_len > 63) return false;
        }
        prev = c;
    }
    return label_len > 0 && prev != '-';
}

std::optional<std::string> extract_http_host(ByteView stream)
{
    std::string_view text = as_chars(stream);
    auto line_end = text.find("\r\n");
    if (line_end == std::string_view::npos) return std::nullopt;

    // Request line: METHOD SP request-target SP HTTP/1.x
    std::string_view line = text.substr(0, line_end);
    auto sp1 = line.find(' ');
    if (sp1 == std::string_view::npos || sp1 == 0) return std::nullopt;
    for (char c : line.substr(0, sp1))
        if (c < 'A' || c > 'Z') return std::nullopt;
    auto sp2 = line.find(' ', sp1 + 1);
    if (sp2 == std::string_view::npos || sp2 == sp1 + 1) return std::nullopt;
    for (char c : line.substr(sp1 + 1, sp2 - sp1 - 1))
        if (c <= 0x20 || c >= 0x7f) return std::nullopt;
    auto version = line.substr(sp2 + 1);
    if (version != "HTTP/1.1" && version != "HTTP/1.0") return std::nullopt;

    std::size_t pos = line_end + 2;
    while (pos < text.size()) {
        auto end = text.find("\r\n", pos);
        if (end == std::string_view::npos) return std::nullopt;
        std::string_view header = text.substr(pos, end - pos);
        if (header.empty()) return std::nullopt; // end of headers, no Host
        auto colon = header.find(':');
        if (colon == std::string_view::npos || colon == 0) return std::nullopt;
        if (lower(header.substr(0, colon)) == "host") {
            std::string_view value = header.substr(colon + 1);
            while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.remove_prefix(1);
            while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.remove_suffix(1);
            auto port = value.rfind(':');
            if (port != std::string_view::npos) {
                auto digits = value.substr(port + 1);
                if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                                   [](char c) { return c >= '0' && c <= '9'; }))
                    return std::nullopt;
                value = value.substr(0, port);
            }
            return checked_name(value);
        }
        pos = end + 2;
    }
    return std::nullopt;
}

std::optional<std::string> sni_from_client_hello(ByteView handshake)
{
    Reader r(handshake);
    if (r.u8() != 0x01) return std::nullopt; // ClientHello
    std::uint32_t body_len = r.u24();
    if (!r.ok() || body_len > r.remaining()) return std::nullopt;
    Reader body(r.bytes(body_len));

    std::uint16_t legacy_version = body.u16();
    if ((legacy_version >> 8) != 0x03) return std::nullopt;
    body.skip(32); // random
    std::uint8_t session_id_len = body.u8();
    if (session_id_len > 32) return std::nullopt;
    body.skip(session_id_len);
    std::uint16_t suites_len = body.u16();
    if (suites_len == 0 || suites_len % 2 != 0) return std::nullopt;
    body.skip(suites_len);
    std::uint8_t compression_len = body.u8();
    if (compression_len == 0) return std::nullopt;
    body.skip(compression_len);
    if (!body.ok()) return std::nullopt;
    if (body.empty()) return std::nullopt; // no extensions, no SNI

    std::uint16_t ext_total = body.u16();
    if (!body.ok() || ext_total != body.remaining()) return std::nullopt;
    std::optional<std::string> sni;
    bool seen_sni = false;
    while (!body.empty()) {
        std::uint16_t type = body.u16();
        std::uint16_t len = body.u16();
        if (!body.ok() || len > body.remaining()) return std::nullopt;
        ByteView ext = body.bytes(len);
        if (type != 0x0000) continue;
        if (seen_sni) return std::nullopt; // duplicate extension
        seen_sni = true;
        Reader list(ext);
        std::uint16_t list_len = list.u16();
        if (!list.ok() || list_len != list.remaining() || list_len == 0) return std::nullopt;
        while (!list.empty()) {
            std::uint8_t name_type = list.u8();
            std::uint16_t name_len = list.u16();
            if (!list.ok() || name_len > list.remaining()) return std::nullopt;
            auto name = list.bytes(name_len);
            if (name_type == 0 && !sni) {
                sni = checked_name(as_chars(name));
                if (!sni) return std::nullopt;
            }
        }
    }
    return sni;
}

std::optional<std::string> extract_tls_sni(ByteView stream)
{
    ByteVec handshake;
    Reader r(stream);
    while (!r.empty()) {
        std::uint8_t content_type = r.u8();
        std::uint16_t version = r.u16();
        std::uint16_t len = r.u16();
        if (!r.ok() || content_type != 0x16 || (version >> 8) != 0x03 || len == 0 || len > 16384 + 256)
            return std::nullopt;
        if (len > r.remaining()) return std::nullopt; // truncated record
        append(handshake, r.bytes(len));
        if (handshake.size() >= 4) {
            std::size_t need = 4 + ((std::size_t{handshake[1]} << 16) | (std::size_t{handshake[2]} << 8) | handshake[3]);
            if (handshake.size() >= need) return sni_from_client_hello(ByteView(handshake).first(need));
        }
    }
    return std::nullopt;
}

std::optional<std::string> extract_quic_sni(std::span<const ByteVec> datagrams)
{
    std::optional<ByteVec> first_dcid;
    std::map<std::uint64_t, ByteVec> chunks;
    for (const auto& datagram : datagrams) {
        ByteView rest(datagram);
        while (!rest.empty()) {
            auto info = quic::parse_long_header(rest);
            if (!info) break;
            const std::size_t end = info->packet_end;
            if (info->version == quic::kVersion1 && info->type == quic::LongType::Initial) {
                if (!first_dcid) first_dcid = info->dcid;
                if (info->dcid == *first_dcid) {
                    auto keys = quic::derive_initial_secrets(*first_dcid).client;
                    if (auto opened = quic::open_long_packet(rest.first(end), keys)) {
                        if (auto frames = quic::crypto_frames(opened->payload))
                            for (auto& c : *frames) chunks[c.offset] = std::move(c.data);
                    }
                }
            }
            rest = rest.subspan(end);
        }
    }
    ByteVec stream;
    for (auto& [offset, data] : chunks) {
        if (offset > stream.size()) break;
        std::size_t skip = stream.size() - static_cast<std::size_t>(offset);
        if (skip < data.size()) stream.insert(stream.end(), data.begin() + static_cast<std::ptrdiff_t>(skip), data.end());
    }
    if (stream.size() < 4) return std::nullopt;
    std::size_t need = 4 + ((std::size_t{stream[1]} << 16) | (std::size_t{stream[2]} << 8) | stream[3]);
    if (stream.size() < need) return std::nullopt;
    return sni_from_client_hello(ByteView(stream).first(need));
}

std::optional<std::string> extract_quic_sni(ByteView datagram)
{
    ByteVec copy(datagram.begin(), datagram.end());
    return extract_quic_sni(std::span<const ByteVec>(&copy, 1));
}

std::optional<std::string> extract_hostname(Protocol protocol, ByteView bytes)
{
    switch (protocol) {
    case Protocol::Http: return extract_http_host(bytes);
    case Protocol::Https: return extract_tls_sni(bytes);
    case Protocol::Http3: return extract_quic_sni(bytes);
    }
    return std::nullopt;
}

} // namespace zr::dpi
