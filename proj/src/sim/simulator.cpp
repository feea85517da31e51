#include "zr/sim/simulator.hpp"

#include <httplib.h>

#include "zr/error.hpp"

namespace zr::sim {

using nlohmann::json;

SimulatorConfig SimulatorConfig::with_builtin_endpoints(OperatorProfile profile)
{
    SimulatorConfig c;
    c.profile = std::move(profile);
    c.endpoints = builtin_endpoints();
    c.endpoints.push_back(builtin_control_endpoint());
    return c;
}

Simulator::Simulator(SimulatorConfig config)
    : config_(std::move(config)), ca_(tls::CertificateAuthority::generate("zr-audit simulated origin CA")),
      subscriber_(config_.profile)
{
    config_.profile.validate();
    OriginConfig oc;
    oc.endpoints = config_.endpoints;
    oc.serve_h3 = config_.origin_udp;
    origin_ = std::make_unique<Origin>(oc, ca_);

    for (const auto& e : config_.endpoints) {
        std::vector<net::IpAddress> all = e.addresses_v4;
        all.insert(all.end(), e.addresses_v6.begin(), e.addresses_v6.end());
        for (const auto& ip : all) {
            for (auto p : kAllProtocols) {
                auto l = origin_->listener(p);
                if (l) routes_.add({ip, default_port(p)}, transport_of(p), *l);
            }
        }
    }

    GatewayConfig gc;
    gc.tcp_bind = config_.gateway_tcp;
    gc.udp_bind = config_.gateway_udp;
    gc.routes = routes_;
    gateway_ = std::make_unique<Gateway>(gc, subscriber_);

    http_ = std::make_unique<httplib::Server>();
    auto json_reply = [](httplib::Response& res, const json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    };
    http_->Get(R"(/quota/([^/]+))", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        if (req.matches[1] != config_.subscriber_id) return json_reply(res, {{"error", "unknown subscriber"}}, 404);
        json_reply(res, {{"remaining_bytes", subscriber_.meter().visible_remaining()},
                         {"granularity_bytes", subscriber_.meter().granularity()}});
    });
    http_->Get("/flows", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& f : subscriber_.meter().flows()) arr.push_back(to_json(f));
        json_reply(res, arr);
    });
    http_->Get("/profile", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json_reply(res, to_json(subscriber_.profile()));
    });
    http_->Put("/profile", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        try {
            subscriber_.load_profile(profile_from_json(json::parse(req.body)));
            json_reply(res, {{"ok", true}});
        } catch (const std::exception& e) {
            json_reply(res, {{"error", e.what()}}, 400);
        }
    });
    http_->Post("/session", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
        try {
            auto j = json::parse(req.body);
            auto kind = parse_session_kind(j.value("kind", ""));
            if (!kind) return json_reply(res, {{"error", "kind must be domestic or roaming"}}, 400);
            subscriber_.set_session(*kind);
            json_reply(res, {{"ok", true}, {"kind", std::string(to_string(*kind))}});
        } catch (const std::exception& e) {
            json_reply(res, {{"error", e.what()}}, 400);
        }
    });
    http_->Get("/info", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        json dial = json::array();
        for (const auto& e : routes_.entries())
            dial.push_back(std::string(e.transport == Transport::Tcp ? "tcp:" : "udp:") + e.virtual_addr.to_string() +
                           "=" + e.real.to_string());
        json_reply(res, {{"subscriber_id", config_.subscriber_id},
                         {"dial", dial},
                         {"gateway_tcp", gateway_->tcp_address().to_string()},
                         {"gateway_udp", gateway_->udp_address().to_string()},
                         {"session", std::string(to_string(subscriber_.session()))},
                         {"ca_pem", ca_.root.cert_pem}});
    });
    http_->Get("/totals", [this, json_reply](const httplib::Request&, httplib::Response& res) {
        auto t = subscriber_.meter().totals();
        json_reply(res, {{"metered", t.metered}, {"billed", t.billed}, {"overdraft", t.overdraft}, {"pools", t.pools}});
    });

    const std::string host = config_.control_listen.ip.to_string();
    if (config_.control_listen.port == 0) {
        control_port_ = http_->bind_to_any_port(host);
    } else {
        control_port_ = http_->bind_to_port(host, config_.control_listen.port) ? config_.control_listen.port : -1;
    }
    if (control_port_ <= 0) throw Error(Errc::BindFailed, "control API cannot bind " + config_.control_listen.to_string());
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
}

Simulator::~Simulator() { stop(); }

void Simulator::stop()
{
    if (http_) http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (gateway_) gateway_->stop();
    if (origin_) origin_->stop();
}

std::string Simulator::control_url() const
{
    net::SocketAddress a{config_.control_listen.ip, static_cast<std::uint16_t>(control_port_)};
    return "http://" + a.to_string();
}

} // namespace zr::sim
