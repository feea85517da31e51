#include "zr/h3.hpp"

#include <charconv>

#include "zr/error.hpp"

namespace zr::h3 {

void put_prefix_int(ByteVec& out, std::uint8_t flags, unsigned prefix_bits, std::uint64_t value)
{
    const std::uint64_t max_prefix = (1u << prefix_bits) - 1;
    if (value < max_prefix) {
        out.push_back(static_cast<std::uint8_t>(flags | value));
        return;
    }
    out.push_back(static_cast<std::uint8_t>(flags | max_prefix));
    value -= max_prefix;
    while (value >= 128) {
        out.push_back(static_cast<std::uint8_t>((value & 0x7f) | 0x80));
        value >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(value));
}

std::optional<std::uint64_t> read_prefix_int(Reader& r, std::uint8_t first_byte, unsigned prefix_bits)
{
    const std::uint64_t max_prefix = (1u << prefix_bits) - 1;
    std::uint64_t value = first_byte & max_prefix;
    if (value < max_prefix) return value;
    unsigned shift = 0;
    for (;;) {
        std::uint8_t b = r.u8();
        if (!r.ok() || shift > 56) return std::nullopt;
        value += std::uint64_t{b & 0x7fu} << shift;
        shift += 7;
        if ((b & 0x80) == 0) return value;
    }
}

ByteVec encode_field_section(const Fields& fields)
{
    ByteVec out;
    out.push_back(0x00); // required insert count
    out.push_back(0x00); // delta base
    for (const auto& [name, value] : fields) {
        put_prefix_int(out, 0x20, 3, name.size()); // literal field line with literal name
        append(out, as_bytes(name));
        put_prefix_int(out, 0x00, 7, value.size());
        append(out, as_bytes(value));
    }
    return out;
}

std::optional<Fields> decode_field_section(ByteView block)
{
    Reader r(block);
    if (r.u8() != 0x00 || r.u8() != 0x00 || !r.ok()) return std::nullopt;
    Fields out;
    while (!r.empty()) {
        std::uint8_t first = r.u8();
        if ((first & 0xe0) != 0x20 || (first & 0x08) != 0) return std::nullopt; // only non-Huffman literal names
        auto name_len = read_prefix_int(r, first, 3);
        if (!name_len || *name_len > r.remaining()) return std::nullopt;
        auto name = r.bytes(static_cast<std::size_t>(*name_len));
        std::uint8_t vfirst = r.u8();
        if (!r.ok() || (vfirst & 0x80) != 0) return std::nullopt;
        auto value_len = read_prefix_int(r, vfirst, 7);
        if (!value_len || *value_len > r.remaining()) return std::nullopt;
        auto value = r.bytes(static_cast<std::size_t>(*value_len));
        out.emplace_back(std::string(as_chars(name)), std::string(as_chars(value)));
    }
    return out;
}

ByteVec frame(std::uint64_t type, ByteView payload)
{
    ByteVec out;
    put_varint(out, type);
    put_varint(out, payload.size());
    append(out, payload);
    return out;
}

ByteVec encode_request(const http::Request& req)
{
    Fields fields{{":method", req.method}, {":scheme", "https"}, {":authority", req.authority}, {":path", req.path}};
    if (req.range)
        fields.emplace_back("range",
                            "bytes=" + std::to_string(req.range->first) + "-" + std::to_string(req.range->last));
    return frame(kFrameHeaders, encode_field_section(fields));
}

ByteVec encode_response(const http::Response& resp)
{
    Fields fields{{":status", std::to_string(resp.status)}, {"content-length", std::to_string(resp.body.size())}};
    for (const auto& h : resp.headers)
        if (h.first != "content-length") fields.push_back(h);
    ByteVec out = frame(kFrameHeaders, encode_field_section(fields));
    // DATA frames of at most 16 KiB keep parser buffers small.
    std::size_t off = 0;
    while (off < resp.body.size()) {
        std::size_t n = std::min<std::size_t>(resp.body.size() - off, 16384);
        append(out, frame(kFrameData, ByteView(resp.body).subspan(off, n)));
        off += n;
    }
    return out;
}

std::optional<Frame> FrameParser::next()
{
    ByteView avail = ByteView(buffer_).subspan(consumed_);
    Reader r(avail);
    std::uint64_t type = r.varint();
    std::uint64_t len = r.varint();
    if (!r.ok()) return std::nullopt;
    if (len > (1u << 24)) throw Error(Errc::ParseFailure, "HTTP/3 frame too large");
    if (r.remaining() < len) return std::nullopt;
    auto payload = r.bytes(static_cast<std::size_t>(len));
    Frame f{type, ByteVec(payload.begin(), payload.end())};
    consumed_ += r.position();
    if (consumed_ > 65536 && consumed_ * 2 > buffer_.size()) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_));
        consumed_ = 0;
    }
    return f;
}

std::optional<http::Request> RequestParser::next()
{
    while (auto f = frames_.next()) {
        if (f->type != kFrameHeaders) continue; // request bodies are not used
        auto fields = decode_field_section(f->payload);
        if (!fields) throw Error(Errc::ParseFailure, "bad QPACK field section");
        http::Request req;
        for (const auto& [k, v] : *fields) {
            if (k == ":method") req.method = v;
            else if (k == ":path") req.path = v;
            else if (k == ":authority") req.authority = v;
            else if (k == "range") req.range = http::parse_range(v);
        }
        return req;
    }
    return std::nullopt;
}

std::optional<http::Response> ResponseParser::next()
{
    while (true) {
        if (pending_ && pending_->body.size() >= expected_) {
            auto done = std::move(*pending_);
            pending_.reset();
            return done;
        }
        auto f = frames_.next();
        if (!f) return std::nullopt;
        if (f->type == kFrameHeaders) {
            if (pending_) throw Error(Errc::ParseFailure, "HEADERS before previous body completed");
            auto fields = decode_field_section(f->payload);
            if (!fields) throw Error(Errc::ParseFailure, "bad QPACK field section");
            http::Response resp;
            expected_ = 0;
            for (auto& [k, v] : *fields) {
                if (k == ":status") {
                    resp.status = std::stoi(v);
                } else {
                    if (k == "content-length") {
                        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), expected_);
                        if (ec != std::errc{}) throw Error(Errc::ParseFailure, "bad content-length");
                    }
                    resp.headers.emplace_back(k, v);
                }
            }
            pending_ = std::move(resp);
        } else if (f->type == kFrameData) {
            if (!pending_) throw Error(Errc::ParseFailure, "DATA without HEADERS");
            append(pending_->body, f->payload);
        }
    }
}

} // namespace zr::h3
