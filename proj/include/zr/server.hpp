#pragma once

// Thread-per-connection TCP acceptor and a bidirectional splice, shared by
// the origin, the gateway and the forwarder.

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "zr/net.hpp"

namespace zr::net {

class TcpServer {
public:
    /// The handler owns the connection for its lifetime; it should return
    /// promptly once the socket is shut down by stop().
    using Handler = std::function<void(Socket&)>;

    TcpServer(const SocketAddress& bind, Handler handler);
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    SocketAddress local_address() const { return local_; }
    /// Stops accepting, shuts every live connection down and joins.
    void stop();

private:
    struct Conn {
        Socket socket;
        std::thread thread;
        std::atomic<bool> done{false};
    };
    void accept_loop();
    void reap(bool all);

    Socket listener_;
    SocketAddress local_;
    Handler handler_;
    std::atomic<bool> stop_{false};
    std::mutex mu_;
    std::list<std::unique_ptr<Conn>> conns_;
    std::thread acceptor_;
};

/// Copies bytes both ways until both directions have closed or `stop` is
/// set. `observe(data, a_to_b)` sees every chunk before it is forwarded.
void splice(int a, int b, const std::function<void(ByteView, bool)>& observe, const std::atomic<bool>& stop);

} // namespace zr::net
