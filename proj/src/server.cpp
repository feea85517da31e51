#include "zr/server.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>

namespace zr::net {

TcpServer::TcpServer(const SocketAddress& bind, Handler handler) : handler_(std::move(handler))
{
    listener_ = tcp_listen(bind);
    local_ = net::local_address(listener_.fd());
    acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::accept_loop()
{
    while (!stop_) {
        if (!wait_readable(listener_.fd(), Millis{100})) {
            reap(false);
            continue;
        }
        int fd = ::accept(listener_.fd(), nullptr, nullptr);
        if (fd < 0) continue;
        std::lock_guard lk(mu_);
        if (stop_) {
            ::close(fd);
            break;
        }
        auto conn = std::make_unique<Conn>();
        conn->socket.reset(fd);
        Conn* raw = conn.get();
        conn->thread = std::thread([this, raw] {
            try {
                handler_(raw->socket);
            } catch (const std::exception&) {
                // per-connection failure; the server keeps running
            }
            raw->done = true;
        });
        conns_.push_back(std::move(conn));
    }
}

void TcpServer::reap(bool all)
{
    std::list<std::unique_ptr<Conn>> finished;
    {
        std::lock_guard lk(mu_);
        for (auto it = conns_.begin(); it != conns_.end();) {
            if (all || (*it)->done) {
                if (all) (*it)->socket.shutdown();
                finished.push_back(std::move(*it));
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished)
        if (c->thread.joinable()) c->thread.join();
}

void TcpServer::stop()
{
    if (stop_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.reset();
    reap(true);
}

void splice(int a, int b, const std::function<void(ByteView, bool)>& observe, const std::atomic<bool>& stop)
{
    std::uint8_t buf[65536];
    bool a_open = true, b_open = true;
    while ((a_open || b_open) && !stop) {
        pollfd fds[2] = {{a, static_cast<short>(a_open ? POLLIN : 0), 0}, {b, static_cast<short>(b_open ? POLLIN : 0), 0}};
        int n = ::poll(fds, 2, 100);
        if (n < 0 && errno != EINTR) return;
        if (n <= 0) continue;
        for (int i = 0; i < 2; ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const int from = i == 0 ? a : b;
            const int to = i == 0 ? b : a;
            ssize_t got = ::recv(from, buf, sizeof(buf), MSG_DONTWAIT);
            if (got < 0 && (errno == EAGAIN || errno == EINTR)) continue;
            if (got <= 0) {
                ::shutdown(to, SHUT_WR);
                (i == 0 ? a_open : b_open) = false;
                if (got < 0) return; // reset: tear down both directions
                continue;
            }
            ByteView chunk(buf, static_cast<std::size_t>(got));
            if (observe) observe(chunk, i == 0);
            try {
                send_all(to, chunk);
            } catch (const std::exception&) {
                return;
            }
        }
    }
}

} // namespace zr::net
