#include "zr/http_message.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "zr/crypto.hpp"
#include "zr/error.hpp"

namespace zr::http {

namespace {

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::optional<std::uint64_t> parse_u64(std::string_view s)
{
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

} // namespace

std::optional<std::string> Response::header(std::string_view name) const
{
    for (const auto& [k, v] : headers)
        if (iequals(k, name)) return v;
    return std::nullopt;
}

std::optional<ByteRange> parse_range(std::string_view value)
{
    constexpr std::string_view prefix = "bytes=";
    if (value.substr(0, prefix.size()) != prefix) return std::nullopt;
    value.remove_prefix(prefix.size());
    auto dash = value.find('-');
    if (dash == std::string_view::npos) return std::nullopt;
    auto first = parse_u64(value.substr(0, dash));
    auto last = parse_u64(value.substr(dash + 1));
    if (!first || !last || *last < *first) return std::nullopt;
    return ByteRange{*first, *last};
}

ByteVec resource_body(std::string_view path, std::uint64_t size)
{
    auto digest = crypto::sha256(as_bytes(path));
    std::uint64_t state = 0;
    for (int i = 0; i < 8; ++i) state = (state << 8) | digest[i];
    ByteVec out(size);
    for (std::uint64_t i = 0; i < size; ++i) {
        // xorshift64*
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        out[i] = static_cast<std::uint8_t>((state * 0x2545F4914F6CDD1DULL) >> 56);
    }
    return out;
}

Response make_static_response(const Request& req, std::optional<std::uint64_t> resource_size)
{
    Response resp;
    if (!resource_size) {
        resp.status = 404;
        static constexpr std::string_view body = "not found\n";
        resp.body.assign(body.begin(), body.end());
        resp.headers.emplace_back("content-type", "text/plain");
        return resp;
    }
    ByteVec full = resource_body(req.path, *resource_size);
    if (req.range && req.range->first < full.size()) {
        std::uint64_t last = std::min<std::uint64_t>(req.range->last, full.size() - 1);
        resp.status = 206;
        resp.body.assign(full.begin() + static_cast<std::ptrdiff_t>(req.range->first),
                         full.begin() + static_cast<std::ptrdiff_t>(last + 1));
        resp.headers.emplace_back("content-range", "bytes " + std::to_string(req.range->first) + "-" +
                                                       std::to_string(last) + "/" + std::to_string(full.size()));
    } else {
        resp.status = 200;
        resp.body = std::move(full);
    }
    resp.headers.emplace_back("content-type", "application/octet-stream");
    return resp;
}

} // namespace zr::http

namespace zr::http1 {

namespace {

std::string_view reason(int status)
{
    switch (status) {
    case 200: return "OK";
    case 206: return "Partial Content";
    case 400: return "Bad Request";
    case 404: return "Not Found";
    default: return "Status";
    }
}

struct Head {
    std::string start_line;
    std::vector<std::pair<std::string, std::string>> headers;
    std::size_t length = 0; // bytes including the blank line
};

std::optional<Head> parse_head(const ByteVec& buffer)
{
    std::string_view text = as_chars(buffer);
    auto end = text.find("\r\n\r\n");
    if (end == std::string_view::npos) {
        if (buffer.size() > 64 * 1024) throw Error(Errc::ParseFailure, "HTTP header block too large");
        return std::nullopt;
    }
    Head head;
    head.length = end + 4;
    std::string_view block = text.substr(0, end);
    auto line_end = block.find("\r\n");
    head.start_line = std::string(block.substr(0, line_end));
    std::size_t pos = line_end == std::string_view::npos ? block.size() : line_end + 2;
    while (pos < block.size()) {
        auto next = block.find("\r\n", pos);
        if (next == std::string_view::npos) next = block.size();
        std::string_view line = block.substr(pos, next - pos);
        auto colon = line.find(':');
        if (colon == std::string_view::npos) throw Error(Errc::ParseFailure, "malformed header line");
        std::string_view value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
        std::string name(line.substr(0, colon));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        head.headers.emplace_back(std::move(name), std::string(value));
        pos = next + 2;
    }
    return head;
}

std::uint64_t content_length(const Head& head)
{
    for (const auto& [k, v] : head.headers) {
        if (k == "content-length") {
            std::uint64_t n = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
            if (ec != std::errc{} || ptr != v.data() + v.size())
                throw Error(Errc::ParseFailure, "bad content-length");
            return n;
        }
        if (k == "transfer-encoding") throw Error(Errc::ParseFailure, "transfer-encoding not supported");
    }
    return 0;
}

} // namespace

ByteVec serialize(const http::Request& req)
{
    std::string text = req.method + " " + req.path + " HTTP/1.1\r\nHost: " + req.authority + "\r\n";
    if (req.range)
        text += "Range: bytes=" + std::to_string(req.range->first) + "-" + std::to_string(req.range->last) + "\r\n";
    text += "Connection: keep-alive\r\n\r\n";
    return ByteVec(text.begin(), text.end());
}

ByteVec serialize(const http::Response& resp)
{
    std::string text = "HTTP/1.1 " + std::to_string(resp.status) + " " + std::string(reason(resp.status)) + "\r\n";
    for (const auto& [k, v] : resp.headers)
        if (k != "content-length") text += k + ": " + v + "\r\n";
    text += "content-length: " + std::to_string(resp.body.size()) + "\r\n\r\n";
    ByteVec out(text.begin(), text.end());
    append(out, resp.body);
    return out;
}

std::optional<http::Request> RequestParser::next()
{
    auto head = parse_head(buffer_);
    if (!head) return std::nullopt;
    std::uint64_t body = content_length(*head);
    if (buffer_.size() < head->length + body) return std::nullopt;

    const std::string& line = head->start_line;
    auto sp1 = line.find(' ');
    auto sp2 = line.find(' ', sp1 == std::string::npos ? 0 : sp1 + 1);
    if (sp1 == std::string::npos || sp2 == std::string::npos) throw Error(Errc::ParseFailure, "bad request line");
    http::Request req;
    req.method = line.substr(0, sp1);
    req.path = line.substr(sp1 + 1, sp2 - sp1 - 1);
    for (const auto& [k, v] : head->headers) {
        if (k == "host") req.authority = v;
        else if (k == "range") req.range = http::parse_range(v);
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head->length + body));
    return req;
}

std::optional<http::Response> ResponseParser::next()
{
    auto head = parse_head(buffer_);
    if (!head) return std::nullopt;
    std::uint64_t body = content_length(*head);
    if (buffer_.size() < head->length + body) return std::nullopt;

    const std::string& line = head->start_line;
    if (line.rfind("HTTP/1.", 0) != 0 || line.size() < 12) throw Error(Errc::ParseFailure, "bad status line");
    http::Response resp;
    resp.status = std::stoi(line.substr(9, 3));
    resp.headers = std::move(head->headers);
    auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(head->length);
    resp.body.assign(begin, begin + static_cast<std::ptrdiff_t>(body));
    buffer_.erase(buffer_.begin(), begin + static_cast<std::ptrdiff_t>(body));
    return resp;
}

} // namespace zr::http1
