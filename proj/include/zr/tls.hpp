#pragma once

// OpenSSL TLS sessions driven over memory BIOs so the caller owns the wire
// and can count every byte, plus throwaway CA / leaf certificate minting for
// the simulated origin.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zr/bytes.hpp"

typedef struct ssl_ctx_st SSL_CTX;
typedef struct ssl_st SSL;

namespace zr::tls {

/// PEM-encoded certificate chain and private key.
struct Identity {
    std::string cert_pem;
    std::string key_pem;
};

struct CertificateAuthority {
    Identity root;

    static CertificateAuthority generate(const std::string& common_name);
    /// Leaf certificate with the given DNS SANs signed by this CA.
    Identity issue(const std::vector<std::string>& dns_names) const;
};

struct ClientOptions {
    /// Placed in the SNI extension; empty disables SNI.
    std::string server_name;
    bool verify_peer = true;
    /// Trusted roots (PEM, concatenated). Empty means the system store.
    std::string trust_pem;
    std::vector<std::string> alpn;
    bool tls13_only = false;
};

class Context {
public:
    static std::shared_ptr<Context> client(const ClientOptions& opts);
    static std::shared_ptr<Context> server(const Identity& identity, std::vector<std::string> alpn);
    ~Context();
    Context(const Context&) = delete;
    Context& operator=(const Context&) = delete;

    SSL_CTX* native() const { return ctx_; }
    bool is_server() const { return server_; }
    const ClientOptions& client_options() const { return client_opts_; }
    const std::vector<std::string>& server_alpn() const { return server_alpn_; }

private:
    Context() = default;
    SSL_CTX* ctx_ = nullptr;
    bool server_ = false;
    ClientOptions client_opts_;
    std::vector<std::string> server_alpn_;
};

enum class Status { Ok, WantRead, Closed, Failed };

/// A TLS endpoint whose ciphertext is exchanged through feed()/take_output().
class Session {
public:
    explicit Session(std::shared_ptr<Context> ctx);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Ciphertext received from the peer.
    void feed(ByteView ciphertext);
    /// Ciphertext to be sent to the peer (drains the output buffer).
    ByteVec take_output();
    bool has_output() const;

    Status handshake();
    bool handshake_done() const;
    /// Encrypts application data into the output buffer.
    void write(ByteView plaintext);
    /// Decrypts available application data; Ok with n == 0 never happens,
    /// WantRead means more ciphertext is needed.
    Status read(ByteVec& out);
    /// Queues close_notify.
    void close();

    std::string negotiated_alpn() const;
    std::string error_text() const { return error_; }

private:
    std::shared_ptr<Context> ctx_;
    SSL* ssl_ = nullptr;
    std::string error_;
};

/// Blocking driver for a Session over caller-supplied byte I/O.
class Stream {
public:
    using SendFn = std::function<void(ByteView)>;
    /// nullopt on timeout, 0 on orderly close.
    using RecvFn = std::function<std::optional<std::size_t>(std::span<std::uint8_t>, std::chrono::milliseconds)>;

    Stream(Session& session, SendFn send, RecvFn recv) : session_(session), send_(std::move(send)), recv_(std::move(recv)) {}

    /// Throws Error{ProtocolUnsupported} on handshake failure or peer close,
    /// Error{Timeout} when the peer stalls.
    void handshake(std::chrono::milliseconds timeout);
    void write(ByteView plaintext);
    /// Application bytes available within `timeout`; empty on timeout.
    /// Throws Error{IoFailure} once the peer has closed.
    ByteVec read(std::chrono::milliseconds timeout);
    void close();

private:
    void flush();

    Session& session_;
    SendFn send_;
    RecvFn recv_;
    ByteVec buf_ = ByteVec(32768);
};

} // namespace zr::tls
