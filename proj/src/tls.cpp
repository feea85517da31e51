#include "zr/tls.hpp"

#include <cstring>

#include <openssl/bio.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include "zr/crypto.hpp"
#include "zr/error.hpp"

namespace zr::tls {

namespace {

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct X509Deleter {
    void operator()(X509* p) const { X509_free(p); }
};
struct BioDeleter {
    void operator()(BIO* p) const { BIO_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using X509Ptr = std::unique_ptr<X509, X509Deleter>;
using BioPtr = std::unique_ptr<BIO, BioDeleter>;

std::string openssl_error()
{
    std::string out;
    while (unsigned long e = ERR_get_error()) {
        char buf[256];
        ERR_error_string_n(e, buf, sizeof(buf));
        if (!out.empty()) out += "; ";
        out += buf;
    }
    return out.empty() ? "unknown OpenSSL error" : out;
}

[[noreturn]] void fail(const std::string& what) { throw Error(Errc::InvalidArgument, what + ": " + openssl_error()); }

PkeyPtr new_key()
{
    PkeyPtr key(EVP_PKEY_Q_keygen(nullptr, nullptr, "EC", "P-256"));
    if (!key) fail("keygen");
    return key;
}

std::string pem_of(X509* cert)
{
    BioPtr bio(BIO_new(BIO_s_mem()));
    PEM_write_bio_X509(bio.get(), cert);
    char* data = nullptr;
    long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
}

std::string pem_of(EVP_PKEY* key)
{
    BioPtr bio(BIO_new(BIO_s_mem()));
    PEM_write_bio_PrivateKey(bio.get(), key, nullptr, nullptr, 0, nullptr, nullptr);
    char* data = nullptr;
    long len = BIO_get_mem_data(bio.get(), &data);
    return std::string(data, static_cast<std::size_t>(len));
}

X509Ptr cert_from_pem(const std::string& pem)
{
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    X509Ptr cert(PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr));
    if (!cert) fail("parse certificate");
    return cert;
}

PkeyPtr key_from_pem(const std::string& pem)
{
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    PkeyPtr key(PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr));
    if (!key) fail("parse private key");
    return key;
}

void add_ext(X509* cert, X509* issuer, int nid, const char* value)
{
    X509V3_CTX v3;
    X509V3_set_ctx_nodb(&v3);
    X509V3_set_ctx(&v3, issuer, cert, nullptr, nullptr, 0);
    X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &v3, nid, value);
    if (!ext) fail("extension");
    X509_add_ext(cert, ext, -1);
    X509_EXTENSION_free(ext);
}

X509Ptr make_cert(EVP_PKEY* subject_key, const std::string& cn, X509* issuer)
{
    X509Ptr cert(X509_new());
    X509_set_version(cert.get(), 2);
    std::uint8_t serial_bytes[8];
    crypto::random_bytes(serial_bytes);
    std::uint64_t serial = 0;
    for (auto b : serial_bytes) serial = (serial << 8) | b;
    ASN1_INTEGER_set_uint64(X509_get_serialNumber(cert.get()), serial >> 1);
    X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
    X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * 365);
    X509_set_pubkey(cert.get(), subject_key);
    X509_NAME* name = X509_get_subject_name(cert.get());
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC, reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1, 0);
    X509_set_issuer_name(cert.get(), issuer ? X509_get_subject_name(issuer) : name);
    return cert;
}

int alpn_select(SSL*, const unsigned char** out, unsigned char* outlen, const unsigned char* in, unsigned int inlen,
                void* arg)
{
    const auto* ctx = static_cast<const Context*>(arg);
    for (const auto& wanted : ctx->server_alpn()) {
        unsigned int i = 0;
        while (i < inlen) {
            unsigned int len = in[i];
            if (i + 1 + len > inlen) break;
            if (len == wanted.size() && std::memcmp(in + i + 1, wanted.data(), len) == 0) {
                *out = in + i + 1;
                *outlen = static_cast<unsigned char>(len);
                return SSL_TLSEXT_ERR_OK;
            }
            i += 1 + len;
        }
    }
    return SSL_TLSEXT_ERR_NOACK;
}

ByteVec alpn_wire(const std::vector<std::string>& protos)
{
    ByteVec out;
    for (const auto& p : protos) {
        out.push_back(static_cast<std::uint8_t>(p.size()));
        append(out, as_bytes(p));
    }
    return out;
}

} // namespace

CertificateAuthority CertificateAuthority::generate(const std::string& common_name)
{
    auto key = new_key();
    auto cert = make_cert(key.get(), common_name, nullptr);
    add_ext(cert.get(), cert.get(), NID_basic_constraints, "critical,CA:TRUE");
    add_ext(cert.get(), cert.get(), NID_key_usage, "critical,keyCertSign,cRLSign");
    add_ext(cert.get(), cert.get(), NID_subject_key_identifier, "hash");
    if (X509_sign(cert.get(), key.get(), EVP_sha256()) == 0) fail("sign CA");
    return CertificateAuthority{Identity{pem_of(cert.get()), pem_of(key.get())}};
}

Identity CertificateAuthority::issue(const std::vector<std::string>& dns_names) const
{
    auto ca_cert = cert_from_pem(root.cert_pem);
    auto ca_key = key_from_pem(root.key_pem);
    auto key = new_key();
    auto cert = make_cert(key.get(), dns_names.empty() ? "origin" : dns_names.front(), ca_cert.get());
    add_ext(cert.get(), ca_cert.get(), NID_basic_constraints, "critical,CA:FALSE");
    add_ext(cert.get(), ca_cert.get(), NID_ext_key_usage, "serverAuth");
    if (!dns_names.empty()) {
        std::string san;
        for (const auto& n : dns_names) {
            if (!san.empty()) san += ",";
            san += "DNS:" + n;
        }
        add_ext(cert.get(), ca_cert.get(), NID_subject_alt_name, san.c_str());
    }
    if (X509_sign(cert.get(), ca_key.get(), EVP_sha256()) == 0) fail("sign leaf");
    return Identity{pem_of(cert.get()) + root.cert_pem, pem_of(key.get())};
}

std::shared_ptr<Context> Context::client(const ClientOptions& opts)
{
    std::shared_ptr<Context> ctx(new Context());
    ctx->ctx_ = SSL_CTX_new(TLS_client_method());
    if (!ctx->ctx_) fail("SSL_CTX_new");
    ctx->client_opts_ = opts;
    SSL_CTX_set_min_proto_version(ctx->ctx_, opts.tls13_only ? TLS1_3_VERSION : TLS1_2_VERSION);
    SSL_CTX_set_session_cache_mode(ctx->ctx_, SSL_SESS_CACHE_OFF);
    if (opts.verify_peer) {
        SSL_CTX_set_verify(ctx->ctx_, SSL_VERIFY_PEER, nullptr);
        if (opts.trust_pem.empty()) {
            SSL_CTX_set_default_verify_paths(ctx->ctx_);
        } else {
            X509_STORE* store = SSL_CTX_get_cert_store(ctx->ctx_);
            BioPtr bio(BIO_new_mem_buf(opts.trust_pem.data(), static_cast<int>(opts.trust_pem.size())));
            while (X509* cert = PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr)) {
                X509_STORE_add_cert(store, cert);
                X509_free(cert);
            }
            ERR_clear_error();
        }
    } else {
        SSL_CTX_set_verify(ctx->ctx_, SSL_VERIFY_NONE, nullptr);
    }
    if (!opts.alpn.empty()) {
        auto wire = alpn_wire(opts.alpn);
        SSL_CTX_set_alpn_protos(ctx->ctx_, wire.data(), static_cast<unsigned>(wire.size()));
    }
    return ctx;
}

std::shared_ptr<Context> Context::server(const Identity& identity, std::vector<std::string> alpn)
{
    std::shared_ptr<Context> ctx(new Context());
    ctx->ctx_ = SSL_CTX_new(TLS_server_method());
    if (!ctx->ctx_) fail("SSL_CTX_new");
    ctx->server_ = true;
    ctx->server_alpn_ = std::move(alpn);
    SSL_CTX_set_min_proto_version(ctx->ctx_, TLS1_2_VERSION);
    SSL_CTX_set_options(ctx->ctx_, SSL_OP_NO_TICKET);
    SSL_CTX_set_num_tickets(ctx->ctx_, 0);
    SSL_CTX_set_session_cache_mode(ctx->ctx_, SSL_SESS_CACHE_OFF);

    BioPtr bio(BIO_new_mem_buf(identity.cert_pem.data(), static_cast<int>(identity.cert_pem.size())));
    X509Ptr leaf(PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr));
    if (!leaf || SSL_CTX_use_certificate(ctx->ctx_, leaf.get()) != 1) fail("load certificate");
    while (X509* extra = PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr))
        SSL_CTX_add_extra_chain_cert(ctx->ctx_, extra); // takes ownership
    ERR_clear_error();
    auto key = key_from_pem(identity.key_pem);
    if (SSL_CTX_use_PrivateKey(ctx->ctx_, key.get()) != 1) fail("load key");
    if (!ctx->server_alpn_.empty()) SSL_CTX_set_alpn_select_cb(ctx->ctx_, alpn_select, ctx.get());
    return ctx;
}

Context::~Context()
{
    if (ctx_) SSL_CTX_free(ctx_);
}

Session::Session(std::shared_ptr<Context> ctx) : ctx_(std::move(ctx))
{
    ssl_ = SSL_new(ctx_->native());
    if (!ssl_) fail("SSL_new");
    BIO* rbio = BIO_new(BIO_s_mem());
    BIO* wbio = BIO_new(BIO_s_mem());
    BIO_set_mem_eof_return(rbio, -1);
    SSL_set_bio(ssl_, rbio, wbio);
    if (ctx_->is_server()) {
        SSL_set_accept_state(ssl_);
    } else {
        const auto& opts = ctx_->client_options();
        if (!opts.server_name.empty()) {
            SSL_set_tlsext_host_name(ssl_, opts.server_name.c_str());
            if (opts.verify_peer) SSL_set1_host(ssl_, opts.server_name.c_str());
        }
        SSL_set_connect_state(ssl_);
    }
}

Session::~Session()
{
    if (ssl_) SSL_free(ssl_);
}

void Session::feed(ByteView ciphertext)
{
    if (ciphertext.empty()) return;
    BIO_write(SSL_get_rbio(ssl_), ciphertext.data(), static_cast<int>(ciphertext.size()));
}

ByteVec Session::take_output()
{
    BIO* wbio = SSL_get_wbio(ssl_);
    ByteVec out(static_cast<std::size_t>(BIO_ctrl_pending(wbio)));
    if (!out.empty()) {
        int n = BIO_read(wbio, out.data(), static_cast<int>(out.size()));
        out.resize(n > 0 ? static_cast<std::size_t>(n) : 0);
    }
    return out;
}

bool Session::has_output() const { return BIO_ctrl_pending(SSL_get_wbio(ssl_)) > 0; }

bool Session::handshake_done() const { return SSL_is_init_finished(ssl_) == 1; }

Status Session::handshake()
{
    if (handshake_done()) return Status::Ok;
    ERR_clear_error();
    int rc = SSL_do_handshake(ssl_);
    if (rc == 1) return Status::Ok;
    int err = SSL_get_error(ssl_, rc);
    if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) return Status::WantRead;
    if (err == SSL_ERROR_ZERO_RETURN) return Status::Closed;
    error_ = openssl_error();
    long verify = SSL_get_verify_result(ssl_);
    if (verify != X509_V_OK) error_ += std::string(" (verify: ") + X509_verify_cert_error_string(verify) + ")";
    return Status::Failed;
}

void Session::write(ByteView plaintext)
{
    std::size_t off = 0;
    while (off < plaintext.size()) {
        std::size_t chunk = std::min<std::size_t>(plaintext.size() - off, 16384);
        ERR_clear_error();
        int n = SSL_write(ssl_, plaintext.data() + off, static_cast<int>(chunk));
        if (n <= 0) throw Error(Errc::IoFailure, "SSL_write: " + openssl_error());
        off += static_cast<std::size_t>(n);
    }
}

Status Session::read(ByteVec& out)
{
    std::uint8_t buf[16384];
    bool any = false;
    for (;;) {
        ERR_clear_error();
        int n = SSL_read(ssl_, buf, sizeof(buf));
        if (n > 0) {
            out.insert(out.end(), buf, buf + n);
            any = true;
            continue;
        }
        int err = SSL_get_error(ssl_, n);
        if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) return any ? Status::Ok : Status::WantRead;
        if (err == SSL_ERROR_ZERO_RETURN) return any ? Status::Ok : Status::Closed;
        error_ = openssl_error();
        return any ? Status::Ok : Status::Failed;
    }
}

void Session::close()
{
    ERR_clear_error();
    SSL_shutdown(ssl_);
}

std::string Session::negotiated_alpn() const
{
    const unsigned char* data = nullptr;
    unsigned int len = 0;
    SSL_get0_alpn_selected(ssl_, &data, &len);
    return data ? std::string(reinterpret_cast<const char*>(data), len) : std::string{};
}

void Stream::flush()
{
    if (session_.has_output()) send_(session_.take_output());
}

void Stream::handshake(std::chrono::milliseconds timeout)
{
    const auto until = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto st = session_.handshake();
        flush();
        if (st == Status::Ok) return;
        if (st != Status::WantRead) throw Error(Errc::ProtocolUnsupported, "TLS handshake failed: " + session_.error_text());
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw Error(Errc::Timeout, "TLS handshake timed out");
        auto n = recv_(buf_, left);
        if (!n) throw Error(Errc::Timeout, "TLS handshake timed out");
        if (*n == 0) throw Error(Errc::ProtocolUnsupported, "peer closed during TLS handshake");
        session_.feed(ByteView(buf_).first(*n));
    }
}

void Stream::write(ByteView plaintext)
{
    session_.write(plaintext);
    flush();
}

ByteVec Stream::read(std::chrono::milliseconds timeout)
{
    ByteVec out;
    const auto until = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto st = session_.read(out);
        flush();
        if (!out.empty()) return out;
        if (st == Status::Closed) throw Error(Errc::IoFailure, "TLS peer closed");
        if (st == Status::Failed) throw Error(Errc::IoFailure, "TLS read failed: " + session_.error_text());
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
        if (left.count() < 0) return out;
        auto n = recv_(buf_, left);
        if (!n) return out;
        if (*n == 0) throw Error(Errc::IoFailure, "connection closed");
        session_.feed(ByteView(buf_).first(*n));
    }
}

void Stream::close()
{
    session_.close();
    try {
        flush();
    } catch (const Error&) {
    }
}

} // namespace zr::tls
