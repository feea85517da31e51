// zr-audit: zero-rating classification audits against operators or the
// bundled simulator.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "zr/campaign.hpp"
#include "zr/error.hpp"
#include "zr/forwarder.hpp"
#include "zr/sim/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfigInvalid = 2;
constexpr int kExitAborted = 3;

volatile std::sig_atomic_t g_stop = 0;

void wait_for_signal()
{
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_run(const std::string& config_path, const std::string& only, const std::string& report_dir,
            const std::string& formats, bool normalized, bool quiet)
{
    zr::campaign::CampaignConfig config;
    try {
        config = zr::campaign::load_config(config_path);
        if (!report_dir.empty()) config.report_dir = report_dir;
        if (!formats.empty()) {
            config.formats.clear();
            for (const auto& f : split(formats, ',')) {
                auto fmt = zr::report::parse_format(f);
                if (!fmt) throw zr::Error(zr::Errc::ConfigInvalid, "unknown format " + f);
                config.formats.push_back(*fmt);
            }
        }
        zr::campaign::validate(config);
    } catch (const zr::Error& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return kExitConfigInvalid;
    }

    zr::campaign::RunOptions opts;
    if (!only.empty()) opts.only_operator = only;
    if (!quiet) opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
    zr::report::CampaignReport report;
    try {
        report = zr::campaign::run_campaign(config, opts);
    } catch (const zr::Error& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return e.code() == zr::Errc::ConfigInvalid ? kExitConfigInvalid : kExitFailure;
    }
    try {
        for (const auto& path : zr::report::emit_reports(report, config.report_dir, config.formats, normalized))
            std::cerr << "wrote " << path << "\n";
    } catch (const zr::Error& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return kExitFailure;
    }
    std::cout << zr::report::render_text(report);
    for (const auto& op : report.operators)
        if (op.aborted) std::cerr << op.name << " aborted: " << op.abort_reason << "\n";
    return report.aborted() ? kExitAborted : kExitOk;
}

int cmd_validate(const std::string& config_path)
{
    try {
        zr::campaign::validate(zr::campaign::load_config(config_path));
    } catch (const zr::Error& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return kExitConfigInvalid;
    }
    std::cout << "ok\n";
    return kExitOk;
}

int cmd_sim(const std::string& profile_path, const std::string& listen, const std::string& subscriber)
{
    zr::sim::SimulatorConfig config;
    try {
        config = zr::sim::SimulatorConfig::with_builtin_endpoints(zr::sim::load_profile(profile_path));
    } catch (const zr::Error& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return kExitConfigInvalid;
    }
    auto addr = zr::net::SocketAddress::parse(listen);
    if (!addr) {
        std::cerr << "zr-audit: bad listen address " << listen << "\n";
        return kExitConfigInvalid;
    }
    config.control_listen = *addr;
    config.gateway_tcp.ip = addr->ip;
    config.gateway_udp.ip = addr->ip;
    config.subscriber_id = subscriber;
    zr::sim::Simulator sim(std::move(config));
    std::cout << "control " << sim.control_url() << "\n"
              << "gateway tcp " << sim.route().tcp_gateway.to_string() << " udp "
              << sim.route().udp_gateway.to_string() << "\n"
              << "subscriber " << sim.subscriber_id() << std::endl;
    wait_for_signal();
    sim.stop();
    return kExitOk;
}

int cmd_probe(const std::string& host, const std::string& path, const std::vector<std::string>& v4,
              const std::vector<std::string>& v6)
{
    zr::EndpointSpec ep;
    ep.application = host;
    ep.hostname = host;
    ep.resource_path = path;
    ep.protocols = {zr::kAllProtocols[0], zr::kAllProtocols[1], zr::kAllProtocols[2]};
    for (const auto& a : v4)
        if (auto ip = zr::net::IpAddress::parse(a)) ep.addresses_v4.push_back(*ip);
    for (const auto& a : v6)
        if (auto ip = zr::net::IpAddress::parse(a)) ep.addresses_v6.push_back(*ip);
    zr::engine::EngineOptions eo;
    eo.io_timeout = std::chrono::seconds(5);
    zr::engine::TrafficEngine engine(eo);
    auto classes = engine.probe_endpoint_support(ep);
    for (auto p : zr::kAllProtocols)
        for (auto v : zr::kAllIpVersions) {
            zr::FlowClass fc{p, v};
            std::cout << fc.to_string() << " " << (classes.contains(fc) ? "supported" : "unsupported") << "\n";
        }
    return classes.empty() ? kExitFailure : kExitOk;
}

int cmd_relay(const std::string& listen, const std::vector<std::string>& maps, const std::vector<std::string>& dials,
              long udp_expiry_ms, long lifetime_ms)
{
    zr::fwd::ForwarderSpec spec;
    auto ip = zr::net::IpAddress::parse(listen);
    if (!ip) {
        std::cout << "error bad listen address" << std::endl;
        return kExitConfigInvalid;
    }
    spec.listen_address = *ip;
    for (const auto& m : maps) {
        auto pm = zr::fwd::parse_port_map(m);
        if (!pm) {
            std::cout << "error bad map " << m << std::endl;
            return kExitConfigInvalid;
        }
        spec.port_maps.push_back(*pm);
    }
    for (const auto& d : dials)
        if (!zr::fwd::parse_dial_entry(d, spec.dial)) {
            std::cout << "error bad dial entry " << d << std::endl;
            return kExitConfigInvalid;
        }
    spec.udp_idle_expiry = std::chrono::milliseconds(udp_expiry_ms);
    std::unique_ptr<zr::fwd::Relay> relay;
    try {
        relay = std::make_unique<zr::fwd::Relay>(spec);
    } catch (const zr::Error& e) {
        std::cout << "error " << e.what() << std::endl;
        return kExitFailure;
    }
    for (const auto& b : relay->bound())
        std::cout << "bound " << (b.transport == zr::Transport::Udp ? "udp" : "tcp") << " " << b.listen_port << " "
                  << b.origin.to_string() << "\n";
    std::cout << "ready" << std::endl;
    if (lifetime_ms > 0) {
        std::signal(SIGINT, [](int) { g_stop = 1; });
        std::signal(SIGTERM, [](int) { g_stop = 1; });
        const auto end = std::chrono::steady_clock::now() + std::chrono::milliseconds(lifetime_ms);
        while (!g_stop && std::chrono::steady_clock::now() < end)
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
    } else {
        wait_for_signal();
    }
    relay->stop();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    std::signal(SIGPIPE, SIG_IGN);
    CLI::App app{"Zero-rating classification audit toolkit"};
    app.require_subcommand(1);

    std::string config_path, only, report_dir, formats;
    bool normalized = false, quiet = false;
    auto* run = app.add_subcommand("run", "Run a campaign and write reports");
    run->add_option("--config", config_path, "Campaign config (JSON)")->required();
    run->add_option("--only-operator", only, "Run a single operator");
    run->add_option("--report-dir", report_dir, "Report directory (overrides the config)");
    run->add_option("--formats", formats, "Comma-separated: json,csv,text");
    run->add_flag("--normalized", normalized, "Omit timings and counters from the JSON report");
    run->add_flag("--quiet", quiet, "No progress log");

    auto* val = app.add_subcommand("validate", "Check a campaign config");
    val->add_option("--config", config_path, "Campaign config (JSON)")->required();

    std::string profile_path, listen = "127.0.0.1:8480", subscriber = "sim-1";
    auto* sim = app.add_subcommand("sim", "Run the operator simulator");
    sim->add_option("--profile", profile_path, "Operator profile (JSON)")->required();
    sim->add_option("--listen", listen, "Control API address");
    sim->add_option("--subscriber", subscriber, "Subscriber id");

    std::string host, path = "/";
    std::vector<std::string> v4, v6;
    auto* probe = app.add_subcommand("probe-endpoint", "Report which protocols and IP versions an endpoint serves");
    probe->add_option("--host", host, "Hostname")->required();
    probe->add_option("--path", path, "Resource path");
    probe->add_option("--ipv4", v4, "IPv4 address instead of DNS");
    probe->add_option("--ipv6", v6, "IPv6 address instead of DNS");

    std::string relay_listen = "127.0.0.1";
    std::vector<std::string> maps, dials;
    long udp_expiry_ms = 300000, lifetime_ms = 0;
    auto* relay = app.add_subcommand("relay", "Run an L4 relay (used by remote provisioners)");
    relay->add_option("--listen", relay_listen, "Listen address");
    relay->add_option("--map", maps, "tcp:PORT=ORIGIN or udp:PORT=ORIGIN")->required();
    relay->add_option("--dial", dials, "tcp:VIRTUAL=REAL translation");
    relay->add_option("--udp-expiry-ms", udp_expiry_ms, "Idle UDP mapping expiry");
    relay->add_option("--lifetime-ms", lifetime_ms, "Exit after this long (0: until signalled)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigInvalid;
    }

    try {
        if (*run) return cmd_run(config_path, only, report_dir, formats, normalized, quiet);
        if (*val) return cmd_validate(config_path);
        if (*sim) return cmd_sim(profile_path, listen, subscriber);
        if (*probe) return cmd_probe(host, path, v4, v6);
        if (*relay) return cmd_relay(relay_listen, maps, dials, udp_expiry_ms, lifetime_ms);
    } catch (const std::exception& e) {
        std::cerr << "zr-audit: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
