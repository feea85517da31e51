#pragma once

// HTTP/3 frame layer with a static-table-free QPACK encoding (every field
// line is a literal with literal name; no dynamic table, no Huffman).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zr/bytes.hpp"
#include "zr/http_message.hpp"

namespace zr::h3 {

inline constexpr std::uint64_t kFrameData = 0x00;
inline constexpr std::uint64_t kFrameHeaders = 0x01;

using Fields = std::vector<std::pair<std::string, std::string>>;

/// RFC 7541 prefix integer.
void put_prefix_int(ByteVec& out, std::uint8_t first_byte_flags, unsigned prefix_bits, std::uint64_t value);
std::optional<std::uint64_t> read_prefix_int(Reader& r, std::uint8_t first_byte, unsigned prefix_bits);

ByteVec encode_field_section(const Fields& fields);
std::optional<Fields> decode_field_section(ByteView block);

ByteVec frame(std::uint64_t type, ByteView payload);

ByteVec encode_request(const http::Request& req);
ByteVec encode_response(const http::Response& resp);

struct Frame {
    std::uint64_t type = 0;
    ByteVec payload;
};

class FrameParser {
public:
    void feed(ByteView data) { append(buffer_, data); }
    /// Throws Error{ParseFailure} on malformed framing.
    std::optional<Frame> next();

private:
    ByteVec buffer_;
    std::size_t consumed_ = 0;
};

class RequestParser {
public:
    void feed(ByteView data) { frames_.feed(data); }
    std::optional<http::Request> next();

private:
    FrameParser frames_;
};

/// Collects HEADERS + DATA frames into responses; bodies are framed by content-length.
class ResponseParser {
public:
    void feed(ByteView data) { frames_.feed(data); }
    std::optional<http::Response> next();

private:
    FrameParser frames_;
    std::optional<http::Response> pending_;
    std::uint64_t expected_ = 0;
};

} // namespace zr::h3
