#pragma once

// HTTP message model shared by the HTTP/1.1 and HTTP/3 codecs.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zr/bytes.hpp"

namespace zr::http {

struct ByteRange {
    std::uint64_t first = 0;
    std::uint64_t last = 0; // inclusive
};

struct Request {
    std::string method = "GET";
    std::string path = "/";
    std::string authority;
    std::optional<ByteRange> range;
};

struct Response {
    int status = 0;
    std::vector<std::pair<std::string, std::string>> headers;
    ByteVec body;

    std::optional<std::string> header(std::string_view name) const;
};

/// Parses "bytes=a-b" (single range only).
std::optional<ByteRange> parse_range(std::string_view value);

/// Body bytes for a static resource: deterministic pseudo-random content keyed by path.
ByteVec resource_body(std::string_view path, std::uint64_t size);

/// Builds the response an origin serves for `req` given the resource size
/// (nullopt = unknown path, served as a small 404).
Response make_static_response(const Request& req, std::optional<std::uint64_t> resource_size);

} // namespace zr::http

namespace zr::http1 {

ByteVec serialize(const http::Request& req);
ByteVec serialize(const http::Response& resp);

/// Incremental HTTP/1.1 parser for one direction of a keep-alive connection.
/// Only Content-Length framed bodies are supported.
class RequestParser {
public:
    void feed(ByteView data) { append(buffer_, data); }
    /// Next complete request; throws Error{ParseFailure} on malformed input.
    std::optional<http::Request> next();

private:
    ByteVec buffer_;
};

class ResponseParser {
public:
    void feed(ByteView data) { append(buffer_, data); }
    std::optional<http::Response> next();
    std::size_t buffered() const { return buffer_.size(); }

private:
    ByteVec buffer_;
};

} // namespace zr::http1
