#include "zr/forwarder.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <map>

#include "zr/error.hpp"

extern char** environ;

namespace zr::fwd {

namespace {

std::optional<net::SocketAddress> dial_target(const ForwarderSpec& spec, const net::SocketAddress& origin, Transport t)
{
    if (spec.dial.empty()) return origin;
    return spec.dial.resolve(origin, t);
}

} // namespace

Relay::Relay(const ForwarderSpec& spec) : spec_(spec)
{
    try {
        for (const auto& m : spec_.port_maps) {
            const net::SocketAddress bind{spec_.listen_address, m.listen_port};
            PortMap b = m;
            if (m.transport == Transport::Tcp) {
                const PortMap map = m;
                auto srv = std::make_unique<net::TcpServer>(bind, [this, map](net::Socket& client) {
                    ++tcp_connections_;
                    auto target = dial_target(spec_, map.origin, Transport::Tcp);
                    if (!target) return;
                    net::Socket upstream = net::tcp_connect(*target, net::Millis{3000});
                    net::splice(client.fd(), upstream.fd(), nullptr, stop_);
                });
                b.listen_port = srv->local_address().port;
                tcp_.push_back(std::move(srv));
            } else {
                net::Socket s = net::udp_bind(bind);
                b.listen_port = net::local_address(s.fd()).port;
                udp_threads_.emplace_back([this, sock = std::move(s), m]() mutable { udp_loop(std::move(sock), m); });
            }
            bound_.push_back(b);
        }
    } catch (const Error& e) {
        stop();
        throw Error(Errc::ProvisionFailed, e.what());
    }
}

Relay::~Relay() { stop(); }

void Relay::stop()
{
    stop_ = true;
    for (auto& s : tcp_) s->stop();
    for (auto& t : udp_threads_)
        if (t.joinable()) t.join();
}

void Relay::udp_loop(net::Socket listener, PortMap map)
{
    struct Mapping {
        net::Socket upstream;
        std::chrono::steady_clock::time_point last_active;
    };
    std::map<net::SocketAddress, Mapping> table;
    auto target = dial_target(spec_, map.origin, Transport::Udp);
    ByteVec buf(65536);
    std::vector<pollfd> fds;
    std::vector<const net::SocketAddress*> peers;
    auto last_sweep = std::chrono::steady_clock::now();
    while (!stop_) {
        fds.assign(1, pollfd{listener.fd(), POLLIN, 0});
        peers.assign(1, nullptr);
        for (auto& [peer, m] : table) {
            fds.push_back({m.upstream.fd(), POLLIN, 0});
            peers.push_back(&peer);
        }
        int n = ::poll(fds.data(), fds.size(), 100);
        const auto now = std::chrono::steady_clock::now();
        if (n > 0 && (fds[0].revents & POLLIN)) {
            for (int burst = 0; burst < 256; ++burst) {
                sockaddr_storage ss{};
                socklen_t sl = sizeof(ss);
                ssize_t got = ::recvfrom(listener.fd(), buf.data(), buf.size(), MSG_DONTWAIT,
                                         reinterpret_cast<sockaddr*>(&ss), &sl);
                if (got < 0) break;
                if (!target) continue;
                auto peer = net::SocketAddress::from_sockaddr(reinterpret_cast<sockaddr*>(&ss));
                auto it = table.find(peer);
                if (it == table.end()) {
                    try {
                        it = table.emplace(peer, Mapping{net::udp_connect(*target), now}).first;
                    } catch (const Error&) {
                        continue;
                    }
                    udp_mappings_ = table.size();
                }
                it->second.last_active = now;
                ::send(it->second.upstream.fd(), buf.data(), static_cast<std::size_t>(got), 0);
            }
        }
        for (std::size_t i = 1; n > 0 && i < fds.size(); ++i) {
            if (!(fds[i].revents & POLLIN)) continue;
            sockaddr_storage ss{};
            socklen_t sl = peers[i]->to_sockaddr(ss);
            auto& m = table.at(*peers[i]);
            for (int burst = 0; burst < 256; ++burst) {
                ssize_t got = ::recv(m.upstream.fd(), buf.data(), buf.size(), MSG_DONTWAIT);
                if (got < 0) break;
                m.last_active = now;
                ::sendto(listener.fd(), buf.data(), static_cast<std::size_t>(got), 0, reinterpret_cast<sockaddr*>(&ss),
                         sl);
            }
        }
        if (now - last_sweep >= std::chrono::milliseconds(50)) {
            last_sweep = now;
            std::erase_if(table, [&](const auto& kv) { return now - kv.second.last_active > spec_.udp_idle_expiry; });
            udp_mappings_ = table.size();
        }
    }
}

std::optional<std::uint16_t> Forwarder::port_for(Transport t, std::uint16_t origin_port) const
{
    for (const auto& m : bound())
        if (m.transport == t && m.origin.port == origin_port) return m.listen_port;
    return std::nullopt;
}

namespace {

/// Relay in this process; an optional lifetime watchdog tears it down.
class LocalForwarder final : public Forwarder {
public:
    explicit LocalForwarder(const ForwarderSpec& spec) : address_(spec.listen_address), relay_(std::make_unique<Relay>(spec))
    {
        bound_ = relay_->bound();
        if (spec.lifetime.count() > 0) {
            watchdog_ = std::thread([this, life = spec.lifetime] {
                std::unique_lock lk(mu_);
                if (!cv_.wait_for(lk, life, [this] { return done_; })) {
                    lk.unlock();
                    relay_->stop();
                }
            });
        }
    }
    ~LocalForwarder() override { teardown(); }

    net::IpAddress address() const override { return address_; }
    const std::vector<PortMap>& bound() const override { return bound_; }
    void teardown() override
    {
        {
            std::lock_guard lk(mu_);
            if (done_) return;
            done_ = true;
        }
        cv_.notify_all();
        if (watchdog_.joinable()) watchdog_.join();
        relay_->stop();
    }

private:
    net::IpAddress address_;
    std::unique_ptr<Relay> relay_;
    std::vector<PortMap> bound_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool done_ = false;
    std::thread watchdog_;
};

/// Relay started through a command (e.g. over ssh). The relay reports its
/// ports as "bound <tcp|udp> <listen_port> <origin>" lines, then "ready".
class CommandForwarder final : public Forwarder {
public:
    CommandForwarder(const ForwarderSpec& spec, const ProvisionerSpec& provider) : address_(spec.listen_address)
    {
        if (provider.command.empty()) throw Error(Errc::ProvisionFailed, "remote provisioner needs a command");
        std::vector<std::string> args = provider.command;
        auto extra = relay_arguments(spec);
        args.insert(args.end(), extra.begin(), extra.end());
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);

        int pipefd[2];
        if (::pipe(pipefd) != 0) throw Error(Errc::ProvisionFailed, "pipe failed");
        posix_spawn_file_actions_t fa;
        posix_spawn_file_actions_init(&fa);
        posix_spawn_file_actions_adddup2(&fa, pipefd[1], STDOUT_FILENO);
        posix_spawn_file_actions_addclose(&fa, pipefd[0]);
        int rc = posix_spawnp(&pid_, argv[0], &fa, nullptr, argv.data(), environ);
        posix_spawn_file_actions_destroy(&fa);
        ::close(pipefd[1]);
        out_.reset(pipefd[0]);
        if (rc != 0) throw Error(Errc::ProvisionFailed, "cannot start " + args[0]);

        std::string pending;
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
        char buf[512];
        for (;;) {
            if (std::chrono::steady_clock::now() > deadline || !net::wait_readable(out_.fd(), net::Millis{10000})) {
                teardown();
                throw Error(Errc::ProvisionFailed, "relay did not become ready");
            }
            ssize_t n = ::read(out_.fd(), buf, sizeof(buf));
            if (n <= 0) {
                teardown();
                throw Error(Errc::ProvisionFailed, "relay exited before becoming ready");
            }
            pending.append(buf, static_cast<std::size_t>(n));
            std::size_t nl;
            bool ready = false;
            while ((nl = pending.find('\n')) != std::string::npos) {
                std::string line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                if (line == "ready") ready = true;
                else if (line.starts_with("bound ")) {
                    char proto[8] = {0};
                    unsigned port = 0;
                    char origin[128] = {0};
                    if (std::sscanf(line.c_str(), "bound %7s %u %127s", proto, &port, origin) == 3) {
                        auto o = net::SocketAddress::parse(origin);
                        if (o) bound_.push_back({std::string(proto) == "udp" ? Transport::Udp : Transport::Tcp,
                                                 static_cast<std::uint16_t>(port), *o});
                    }
                } else if (line.starts_with("error")) {
                    teardown();
                    throw Error(Errc::ProvisionFailed, line);
                }
            }
            if (ready) break;
        }
    }
    ~CommandForwarder() override { teardown(); }

    net::IpAddress address() const override { return address_; }
    const std::vector<PortMap>& bound() const override { return bound_; }
    void teardown() override
    {
        if (pid_ <= 0) return;
        ::kill(pid_, SIGTERM);
        int status = 0;
        for (int i = 0; i < 100; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }

private:
    net::IpAddress address_;
    pid_t pid_ = -1;
    net::Socket out_;
    std::vector<PortMap> bound_;
};

} // namespace

std::unique_ptr<Forwarder> provision(const ForwarderSpec& spec, const ProvisionerSpec& provider)
{
    if (spec.port_maps.empty()) throw Error(Errc::ProvisionFailed, "no port maps");
    if (provider.kind == ProvisionerKind::LocalProcess) return std::make_unique<LocalForwarder>(spec);
    return std::make_unique<CommandForwarder>(spec, provider);
}

std::vector<std::string> relay_arguments(const ForwarderSpec& spec)
{
    std::vector<std::string> out{"relay", "--listen", spec.listen_address.to_string()};
    for (const auto& m : spec.port_maps) {
        out.push_back("--map");
        out.push_back(std::string(m.transport == Transport::Tcp ? "tcp:" : "udp:") + std::to_string(m.listen_port) + "=" +
                      m.origin.to_string());
    }
    for (const auto& e : spec.dial.entries()) {
        out.push_back("--dial");
        out.push_back(std::string(e.transport == Transport::Tcp ? "tcp:" : "udp:") + e.virtual_addr.to_string() + "=" +
                      e.real.to_string());
    }
    out.push_back("--udp-expiry-ms");
    out.push_back(std::to_string(spec.udp_idle_expiry.count()));
    if (spec.lifetime.count() > 0) {
        out.push_back("--lifetime-ms");
        out.push_back(std::to_string(spec.lifetime.count()));
    }
    return out;
}

namespace {

std::optional<std::pair<Transport, std::string_view>> split_proto(std::string_view text)
{
    if (text.starts_with("tcp:")) return std::make_pair(Transport::Tcp, text.substr(4));
    if (text.starts_with("udp:")) return std::make_pair(Transport::Udp, text.substr(4));
    return std::nullopt;
}

} // namespace

std::optional<PortMap> parse_port_map(std::string_view text)
{
    auto p = split_proto(text);
    if (!p) return std::nullopt;
    auto eq = p->second.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    unsigned port = 0;
    for (char c : p->second.substr(0, eq)) {
        if (c < '0' || c > '9') return std::nullopt;
        port = port * 10 + static_cast<unsigned>(c - '0');
        if (port > 65535) return std::nullopt;
    }
    auto origin = net::SocketAddress::parse(p->second.substr(eq + 1));
    if (!origin) return std::nullopt;
    return PortMap{p->first, static_cast<std::uint16_t>(port), *origin};
}

bool parse_dial_entry(std::string_view text, transport::DialMap& into)
{
    auto p = split_proto(text);
    if (!p) return false;
    auto eq = p->second.find('=');
    if (eq == std::string_view::npos) return false;
    auto v = net::SocketAddress::parse(p->second.substr(0, eq));
    auto r = net::SocketAddress::parse(p->second.substr(eq + 1));
    if (!v || !r) return false;
    into.add(*v, p->first, *r);
    return true;
}

} // namespace zr::fwd
