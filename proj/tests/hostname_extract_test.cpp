#include <gtest/gtest.h>

#include <algorithm>

#include "support/handshakes.hpp"
#include "support/quic_vectors.hpp"
#include "support/test_support.hpp"
#include "zr/bytes.hpp"
#include "zr/crypto.hpp"
#include "zr/hostname_extract.hpp"
#include "zr/quic_initial.hpp"
#include "zr/tls.hpp"

using namespace zr;
using namespace zr::dpi;
using zr::testing::client_hello;
using zr::testing::random_hostname;
using zr::testing::seeded_rng;
using zr::testing::strip_record;

namespace {

bool occurs_in(const std::string& name, ByteView data)
{
    std::string hay(as_chars(data));
    std::transform(hay.begin(), hay.end(), hay.begin(), [](unsigned char c) { return std::tolower(c); });
    return hay.find(name) != std::string::npos;
}

} // namespace

TEST(HttpHost, ReadsHostHeader)
{
    auto req = "GET /favicon.ico HTTP/1.1\r\nHost: scontent.xx.fbcdn.net\r\nAccept: */*\r\n\r\n";
    EXPECT_EQ(extract_http_host(as_bytes(req)), "scontent.xx.fbcdn.net");
}

TEST(HttpHost, CaseInsensitiveHeaderAndPortStripped)
{
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/1.1\r\nhOsT:  Example.COM:8080 \r\n\r\n")), "example.com");
}

TEST(HttpHost, AbsentCases)
{
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/1.1\r\nAccept: x\r\n\r\n")), std::nullopt);
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/1.1\r\nHost: exam")), std::nullopt);
    EXPECT_EQ(extract_http_host(as_bytes("get / HTTP/1.1\r\nHost: a.b\r\n\r\n")), std::nullopt);
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/2\r\nHost: a.b\r\n\r\n")), std::nullopt);
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/1.1\r\nHost: bad_name!\r\n\r\n")), std::nullopt);
    EXPECT_EQ(extract_http_host(as_bytes("GET / HTTP/1.1\r\nHost: a.b:80x\r\n\r\n")), std::nullopt);
}

TEST(TlsSni, ReadsSniFromOpenSslClientHello)
{
    EXPECT_EQ(extract_tls_sni(client_hello("example.com")), "example.com");
    EXPECT_EQ(extract_tls_sni(client_hello("app.snapchat.com")), "app.snapchat.com");
}

TEST(TlsSni, TruncatedClientHelloIsAbsent)
{
    auto hello = client_hello("example.com");
    for (std::size_t cut : {std::size_t{0}, std::size_t{4}, std::size_t{5}, std::size_t{40}, hello.size() / 2,
                            hello.size() - 1}) {
        ByteView part(hello.data(), cut);
        EXPECT_EQ(extract_tls_sni(part), std::nullopt) << "cut " << cut;
    }
}

TEST(TlsSni, NoSniExtensionIsAbsent)
{
    EXPECT_EQ(extract_tls_sni(client_hello("")), std::nullopt);
}

TEST(TlsSni, BareHandshakeMessage)
{
    EXPECT_EQ(sni_from_client_hello(strip_record(client_hello("static.whatsapp.net"))), "static.whatsapp.net");
}

TEST(QuicInitialVector, InitialSecretsMatchPublishedValues)
{
    auto s = quic::derive_initial_secrets(from_hex(zr::testing::kVectorDcid));
    EXPECT_EQ(to_hex(s.initial_secret), zr::testing::kVectorInitialSecret);
    EXPECT_EQ(to_hex(s.client_secret), zr::testing::kVectorClientSecret);
    EXPECT_EQ(to_hex(s.client.key), zr::testing::kVectorClientKey);
    EXPECT_EQ(to_hex(s.client.iv), zr::testing::kVectorClientIv);
    EXPECT_EQ(to_hex(s.client.hp), zr::testing::kVectorClientHp);
    EXPECT_EQ(to_hex(s.server.key), zr::testing::kVectorServerKey);
    EXPECT_EQ(to_hex(s.server.iv), zr::testing::kVectorServerIv);
    EXPECT_EQ(to_hex(s.server.hp), zr::testing::kVectorServerHp);
}

TEST(QuicInitialVector, DecryptsPublishedClientInitial)
{
    const ByteVec packet = from_hex(zr::testing::kVectorProtectedPacket);
    ASSERT_EQ(packet.size(), 1200u);
    auto keys = quic::derive_initial_secrets(from_hex(zr::testing::kVectorDcid)).client;
    auto opened = quic::open_long_packet(packet, keys);
    ASSERT_TRUE(opened.has_value());
    EXPECT_EQ(opened->packet_number, zr::testing::kVectorPacketNumber);
    EXPECT_EQ(to_hex(opened->header), zr::testing::kVectorPlainHeader);
    ByteVec expected = from_hex(zr::testing::kVectorPlainFrames);
    expected.resize(expected.size() + zr::testing::kVectorPaddingBytes, 0);
    EXPECT_EQ(opened->payload, expected);
}

TEST(QuicInitialVector, SealReproducesProtectedPacket)
{
    ByteVec payload = from_hex(zr::testing::kVectorPlainFrames);
    payload.resize(payload.size() + zr::testing::kVectorPaddingBytes, 0);
    auto keys = quic::derive_initial_secrets(from_hex(zr::testing::kVectorDcid)).client;
    auto sealed = quic::seal_packet(from_hex(zr::testing::kVectorPlainHeader), 4, zr::testing::kVectorPacketNumber,
                                    payload, keys);
    EXPECT_EQ(to_hex(sealed), zr::testing::kVectorProtectedPacket);
}

TEST(QuicInitialVector, ExtractsExampleDotCom)
{
    EXPECT_EQ(extract_quic_sni(ByteView(from_hex(zr::testing::kVectorProtectedPacket))), "example.com");
}

TEST(QuicInitialVector, TamperedPacketIsAbsent)
{
    ByteVec packet = from_hex(zr::testing::kVectorProtectedPacket);
    packet[600] ^= 0x01;
    EXPECT_EQ(extract_quic_sni(ByteView(packet)), std::nullopt);
    ByteVec truncated(packet.begin(), packet.begin() + 300);
    EXPECT_EQ(extract_quic_sni(ByteView(truncated)), std::nullopt);
}

TEST(QuicInitial, OwnInitialCarriesSni)
{
    ByteVec dcid(8), scid(8);
    crypto::random_bytes(dcid);
    crypto::random_bytes(scid);
    auto hello = strip_record(client_hello("app.snapchat.com", {"h3"}));
    auto dgram = quic::build_client_initial(dcid, scid, 0, hello);
    EXPECT_GE(dgram.size(), quic::kMinInitialDatagram);
    EXPECT_EQ(extract_hostname(Protocol::Http3, dgram), "app.snapchat.com");
}

TEST(QuicInitial, ClientHelloSplitAcrossTwoInitials)
{
    ByteVec dcid(8, 0x11), scid(8, 0x22);
    auto hello = strip_record(client_hello("scontent.xx.fbcdn.net", {"h3"}));
    auto keys = quic::derive_initial_secrets(dcid).client;
    // Frame-level split: CRYPTO [0, half) in packet 0 and [half, end) in packet 1.
    const std::size_t half = hello.size() / 2;
    auto make = [&](std::uint64_t pn, std::uint64_t off, ByteView part) {
        ByteVec payload;
        put_u8(payload, 0x06);
        put_varint(payload, off);
        put_varint(payload, part.size());
        append(payload, part);
        payload.resize(1200, 0);
        ByteVec header = {0xc3, 0, 0, 0, 1, 8};
        append(header, dcid);
        put_u8(header, 8);
        append(header, scid);
        put_u8(header, 0);
        put_u16(header, static_cast<std::uint16_t>(0x4000 | (payload.size() + 4 + 16)));
        put_u32(header, static_cast<std::uint32_t>(pn));
        return quic::seal_packet(header, 4, pn, payload, keys);
    };
    std::vector<ByteVec> dgrams = {make(0, 0, ByteView(hello).first(half)), make(1, half, ByteView(hello).subspan(half))};
    EXPECT_EQ(extract_quic_sni(dgrams), "scontent.xx.fbcdn.net");
    EXPECT_EQ(extract_quic_sni(ByteView(dgrams[0])), std::nullopt);
}

// ---------------------------------------------------------------- fuzz

TEST(ExtractionProperty, GeneratedHandshakesAlwaysYieldTheName)
{
    auto rng = seeded_rng(1);
    for (int i = 0; i < 300; ++i) {
        const auto name = random_hostname(rng);
        const std::string req = "GET /x HTTP/1.1\r\nHost: " + name + "\r\nUser-Agent: t\r\n\r\n";
        ASSERT_EQ(extract_http_host(as_bytes(req)), name);
        ASSERT_EQ(extract_tls_sni(client_hello(name)), name);
        if (i % 10 == 0) {
            ByteVec dcid(8), scid(8);
            crypto::random_bytes(dcid);
            crypto::random_bytes(scid);
            auto dgram = quic::build_client_initial(dcid, scid, 0, strip_record(client_hello(name, {"h3"})));
            ASSERT_EQ(extract_quic_sni(ByteView(dgram)), name);
        }
    }
}

TEST(ExtractionProperty, RandomBytesNeverYieldAName)
{
    auto rng = seeded_rng(2);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::size_t> len(0, 2000);
    for (int i = 0; i < 3000; ++i) {
        ByteVec data(len(rng));
        for (auto& b : data) b = static_cast<std::uint8_t>(byte(rng));
        if (i % 3 == 1 && data.size() > 2) {
            data[0] = 0x16; // look like a handshake record
            data[1] = 0x03;
        }
        for (auto p : kAllProtocols) ASSERT_EQ(extract_hostname(p, data), std::nullopt);
    }
}

TEST(ExtractionProperty, MutatedHandshakesYieldPresentNameOrNothing)
{
    auto rng = seeded_rng(3);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < 400; ++i) {
        const auto name = random_hostname(rng);
        ByteVec tls_bytes = client_hello(name);
        std::string req_s = "GET / HTTP/1.1\r\nHost: " + name + "\r\n\r\n";
        ByteVec http_bytes(req_s.begin(), req_s.end());
        for (ByteVec* buf : {&tls_bytes, &http_bytes}) {
            std::uniform_int_distribution<std::size_t> pos(0, buf->size() - 1);
            for (int k = 0; k < 3; ++k) (*buf)[pos(rng)] = static_cast<std::uint8_t>(byte(rng));
        }
        if (auto got = extract_tls_sni(tls_bytes)) {
            ASSERT_TRUE(occurs_in(*got, tls_bytes)) << *got;
        }
        if (auto got = extract_http_host(http_bytes)) {
            ASSERT_TRUE(occurs_in(*got, http_bytes)) << *got;
        }
        if (auto got = extract_tls_sni(tls_bytes)) {
            ASSERT_TRUE(is_valid_hostname(*got));
        }
    }
}

TEST(HostnameSyntax, Validity)
{
    EXPECT_TRUE(is_valid_hostname("a.b-c.d"));
    EXPECT_FALSE(is_valid_hostname(""));
    EXPECT_FALSE(is_valid_hostname("-a.b"));
    EXPECT_FALSE(is_valid_hostname("a..b"));
    EXPECT_FALSE(is_valid_hostname(std::string(64, 'a') + ".com"));
    EXPECT_FALSE(is_valid_hostname("a b"));
}
