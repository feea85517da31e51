#include "zr/campaign.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "zr/billing_codec.hpp"
#include "zr/error.hpp"
#include "zr/sim/classifier.hpp"
#include "zr/sim/simulator.hpp"

namespace zr::campaign {

using engine::Experiment;
using nlohmann::json;
using verdict::CellOutcome;
using verdict::EvidenceCell;

// ---------------------------------------------------------------- layout

unsigned cell_order(const Cell& c)
{
    return static_cast<unsigned>(c.flow_class.protocol) * 6 + (c.flow_class.ip_version == net::IpVersion::V6 ? 3 : 0) +
           static_cast<unsigned>(c.experiment);
}

std::vector<Cell> verify_session(FlowClassSet tested)
{
    std::vector<Cell> out;
    for (auto fc : tested.members()) out.push_back({Experiment::Verify, fc});
    std::sort(out.begin(), out.end(), [](const Cell& a, const Cell& b) { return cell_order(a) < cell_order(b); });
    return out;
}

std::vector<Cell> probe_session(Protocol protocol, FlowClassSet verified_zero_rated,
                                const std::vector<Experiment>& experiments)
{
    std::vector<Cell> out;
    for (auto fc : (verified_zero_rated & FlowClassSet::of_protocol(protocol)).members())
        for (auto e : {Experiment::IpProbe, Experiment::HostProbe})
            if (std::find(experiments.begin(), experiments.end(), e) != experiments.end()) out.push_back({e, fc});
    std::sort(out.begin(), out.end(), [](const Cell& a, const Cell& b) { return cell_order(a) < cell_order(b); });
    return out;
}

std::uint64_t decode_granularity(std::uint64_t reported, std::uint64_t base_unit)
{
    const std::uint64_t floored = reported > 1 ? 2 * reported : 1;
    return std::max<std::uint64_t>({floored, base_unit / 8, 1});
}

FlowClassSet tested_classes(const CampaignConfig& config, const OperatorConfig& op, const EndpointSpec& endpoint)
{
    FlowClassSet out;
    for (auto p : config.protocols) {
        if (!endpoint.supports(p)) continue;
        for (auto v : op.ip_versions)
            if (!endpoint.addresses(v).empty()) out.insert({p, v});
    }
    return out;
}

namespace {

/// Upper bound of one application's traffic: every session at full size.
std::uint64_t app_budget(std::size_t verify_cells, std::uint64_t base)
{
    auto total = [&](unsigned n) { return n ? base * ((std::uint64_t{1} << (n + 1)) - 1) : 0; };
    std::uint64_t sum = total(static_cast<unsigned>(verify_cells));
    for (int p = 0; p < 3; ++p) sum += total(4);
    return sum;
}

// ---------------------------------------------------------------- config json

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::ConfigInvalid, what); }

std::vector<net::IpVersion> versions_from_json(const json& j)
{
    std::vector<net::IpVersion> out;
    for (const auto& e : j) {
        auto v = net::parse_ip_version(e.get<std::string>());
        if (!v) invalid("bad ip version " + e.dump());
        if (std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
    }
    return out;
}

Target target_from_json(const json& j, const std::string& base_dir)
{
    if (j.contains("simulator")) {
        const auto& s = j["simulator"];
        if (s.is_string()) {
            std::filesystem::path p = s.get<std::string>();
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            return SimulatorTarget{sim::load_profile(p.string())};
        }
        return SimulatorTarget{sim::profile_from_json(s)};
    }
    if (j.contains("control_url")) return ControlApiTarget{j["control_url"].get<std::string>()};
    if (j.value("direct", false)) return DirectTarget{};
    invalid("target needs one of simulator, control_url, direct");
}

fwd::ProvisionerSpec provisioner_from_json(const json& j)
{
    fwd::ProvisionerSpec p;
    const auto kind = j.value("kind", "local");
    if (kind == "local") p.kind = fwd::ProvisionerKind::LocalProcess;
    else if (kind == "remote-command") p.kind = fwd::ProvisionerKind::RemoteCommand;
    else invalid("bad provisioner kind " + kind);
    if (j.contains("command")) p.command = j["command"].get<std::vector<std::string>>();
    return p;
}

} // namespace

CampaignConfig config_from_json(const json& j, const std::string& base_dir)
{
    try {
        CampaignConfig c;
        if (!j.is_object()) invalid("campaign config must be an object");
        c.base_unit = j.value("base_unit", c.base_unit);
        if (j.contains("slack_bytes") && !j["slack_bytes"].is_null()) c.slack_bytes = j["slack_bytes"].get<std::uint64_t>();
        c.dummy_hostname = j.value("dummy_hostname", c.dummy_hostname);
        c.roaming_dwell = std::chrono::milliseconds(j.value("roaming_dwell_ms", c.roaming_dwell.count()));
        c.settle_timeout = std::chrono::milliseconds(j.value("settle_timeout_ms", c.settle_timeout.count()));
        c.settle_margin = std::chrono::milliseconds(j.value("settle_margin_ms", c.settle_margin.count()));
        c.parallel_operators = j.value("parallel_operators", c.parallel_operators);

        if (j.contains("protocols")) {
            c.protocols.clear();
            for (const auto& e : j["protocols"]) {
                auto p = parse_protocol(e.get<std::string>());
                if (!p) invalid("bad protocol " + e.dump());
                c.protocols.push_back(*p);
            }
        }
        if (j.contains("experiments")) {
            c.experiments.clear();
            for (const auto& e : j["experiments"]) {
                auto x = engine::parse_experiment(e.get<std::string>());
                if (!x) invalid("bad experiment " + e.dump());
                c.experiments.push_back(*x);
            }
        }
        const auto endpoints = j.value("endpoints", json("builtin"));
        if (endpoints.is_string() && endpoints == "builtin") c.endpoints = builtin_endpoints();
        else
            for (const auto& e : endpoints) c.endpoints.push_back(endpoint_from_json(e));
        const auto control = j.value("control_endpoint", json("builtin"));
        c.control_endpoint =
            control.is_string() && control == "builtin" ? builtin_control_endpoint() : endpoint_from_json(control);

        if (j.contains("output")) {
            const auto& o = j["output"];
            c.report_dir = o.value("report_dir", c.report_dir);
            if (o.contains("formats")) {
                c.formats.clear();
                for (const auto& f : o["formats"]) {
                    auto fmt = report::parse_format(f.get<std::string>());
                    if (!fmt) invalid("bad report format " + f.dump());
                    c.formats.push_back(*fmt);
                }
            }
            if (std::filesystem::path(c.report_dir).is_relative())
                c.report_dir = (std::filesystem::path(base_dir) / c.report_dir).string();
        }

        for (const auto& jo : j.value("operators", json::array())) {
            OperatorConfig op;
            op.name = jo.at("name").get<std::string>();
            op.target = target_from_json(jo.at("target"), base_dir);
            if (jo.contains("adapter")) op.adapter = credit::adapter_from_json(jo["adapter"]);
            op.tariff = jo.value("tariff", std::vector<std::string>{});
            if (jo.contains("ip_versions")) op.ip_versions = versions_from_json(jo["ip_versions"]);
            op.roaming_offered = jo.value("roaming", false);
            if (jo.contains("provisioner")) op.provisioner = provisioner_from_json(jo["provisioner"]);
            c.operators.push_back(std::move(op));
        }
        return c;
    } catch (const json::exception& e) {
        invalid(e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::ConfigInvalid) throw;
        invalid(e.what());
    }
}

CampaignConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) invalid("cannot read " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        invalid(path + ": " + e.what());
    }
    auto dir = std::filesystem::path(path).parent_path().string();
    return config_from_json(j, dir.empty() ? "." : dir);
}

// ---------------------------------------------------------------- validation

namespace {

std::optional<sim::OperatorProfile> fetch_profile(const std::string& url)
{
    httplib::Client cli(url);
    cli.set_connection_timeout(5);
    auto res = cli.Get("/profile");
    if (!res || res->status != 200) return std::nullopt;
    return sim::profile_from_json(json::parse(res->body));
}

void check_profile(const CampaignConfig& c, const OperatorConfig& op, const sim::OperatorProfile& profile,
                   std::vector<std::string>& problems)
{
    try {
        profile.validate();
    } catch (const Error& e) {
        problems.push_back(op.name + ": " + e.what());
        return;
    }
    for (auto v : kAllIpVersions)
        for (const auto& addr : c.control_endpoint.addresses(v))
            for (auto p : kAllProtocols) {
                auto cls = sim::classify_flow(profile, sim::SessionKind::Domestic,
                                              {{p, v}, addr, c.control_endpoint.hostname});
                if (!cls.billed())
                    problems.push_back(op.name + ": control endpoint " + c.control_endpoint.hostname + " (" +
                                       addr.to_string() + ", " + std::string(to_string(p)) + ") matches rule " +
                                       cls.rule_id.value_or("?"));
            }

    std::uint64_t budget = 0;
    for (const auto& e : c.endpoints)
        if (std::find(op.tariff.begin(), op.tariff.end(), e.application) != op.tariff.end())
            budget += app_budget(tested_classes(c, op, e).size(), c.base_unit) * (op.roaming_offered ? 2 : 1);
    if (profile.quota_bytes < budget)
        problems.push_back(op.name + ": quota " + std::to_string(profile.quota_bytes) + " B below the " +
                           std::to_string(budget) + " B the campaign may use");
    std::uint64_t reported = profile.granularity;
    if (op.adapter && op.adapter->parameters.count("granularity_bytes"))
        reported = std::max<std::uint64_t>(reported, std::stoull(op.adapter->parameters.at("granularity_bytes")));
    if (c.base_unit < 2 * decode_granularity(reported, c.base_unit))
        problems.push_back(op.name + ": base_unit " + std::to_string(c.base_unit) + " too small for granularity " +
                           std::to_string(reported));
}

} // namespace

void validate(const CampaignConfig& c)
{
    std::vector<std::string> problems;
    if (c.base_unit == 0) problems.push_back("base_unit must be positive");
    if (c.dummy_hostname.empty()) problems.push_back("dummy_hostname is empty");
    if (c.parallel_operators == 0) problems.push_back("parallel_operators must be at least 1");
    if (std::find(c.experiments.begin(), c.experiments.end(), Experiment::Verify) == c.experiments.end())
        problems.push_back("experiments must include verify");
    if (c.protocols.empty()) problems.push_back("no protocols selected");

    std::set<std::string> apps;
    for (const auto& e : c.endpoints) {
        try {
            e.validate();
        } catch (const Error& ex) {
            problems.push_back(ex.what());
        }
        if (!apps.insert(e.application).second) problems.push_back("duplicate application " + e.application);
        if (e.hostname == c.dummy_hostname) problems.push_back(e.application + " uses the dummy hostname");
    }
    try {
        c.control_endpoint.validate();
    } catch (const Error& ex) {
        problems.push_back(std::string("control endpoint: ") + ex.what());
    }

    std::set<std::string> names;
    for (const auto& op : c.operators) {
        if (op.name.empty()) problems.push_back("operator without name");
        if (!names.insert(op.name).second) problems.push_back("duplicate operator " + op.name);
        if (op.ip_versions.empty()) problems.push_back(op.name + ": no ip versions");
        for (const auto& app : op.tariff)
            if (!apps.count(app)) problems.push_back(op.name + ": tariff lists unknown application " + app);
        if (op.adapter) {
            try {
                op.adapter->validate();
            } catch (const Error& ex) {
                problems.push_back(op.name + ": " + ex.what());
            }
        }
        if (op.provisioner.kind == fwd::ProvisionerKind::RemoteCommand && op.provisioner.command.empty())
            problems.push_back(op.name + ": remote-command provisioner without command");
        if (std::holds_alternative<DirectTarget>(op.target) && !op.adapter)
            problems.push_back(op.name + ": direct targets need an adapter");
        if (auto* s = std::get_if<SimulatorTarget>(&op.target)) check_profile(c, op, s->profile, problems);
        if (auto* a = std::get_if<ControlApiTarget>(&op.target)) {
            std::optional<sim::OperatorProfile> p;
            try {
                p = fetch_profile(a->url);
            } catch (const std::exception&) {
            }
            if (!p) problems.push_back(op.name + ": cannot read profile from " + a->url);
            else check_profile(c, op, *p, problems);
        }
    }
    if (!problems.empty()) {
        std::string msg;
        for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
        invalid(msg);
    }
}

// ---------------------------------------------------------------- execution

namespace {

std::int64_t epoch_ms(std::chrono::system_clock::time_point t)
{
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

struct OperatorAbort {
    std::string reason;
};

class OperatorRun {
public:
    OperatorRun(const CampaignConfig& cfg, const OperatorConfig& op, const RunOptions& opts,
                std::function<void(const std::string&)> log)
        : cfg_(cfg), op_(op), opts_(opts), log_(std::move(log))
    {
        result_.name = op.name;
    }

    report::OperatorResult run()
    {
        std::size_t next_app = 0;
        std::map<std::string, FlowClassSet> domestic_zero_rated;
        try {
            setup();
            for (; next_app < cfg_.endpoints.size(); ++next_app) {
                const auto& ep = cfg_.endpoints[next_app];
                if (!in_tariff(ep.application)) {
                    result_.verdicts.push_back(verdict::not_available(op_.name, ep.application));
                    continue;
                }
                FlowClassSet zr;
                result_.verdicts.push_back(run_application(ep, zr));
                domestic_zero_rated[ep.application] = zr;
            }
            result_.roaming = op_.roaming_offered ? run_roaming(domestic_zero_rated)
                                                  : verdict::RoamingZeroRating::NotOffered;
        } catch (const OperatorAbort& a) {
            abort(a.reason, next_app);
        } catch (const Error& e) {
            abort(e.what(), next_app);
        }
        teardown();
        return std::move(result_);
    }

private:
    bool in_tariff(const std::string& app) const
    {
        return std::find(op_.tariff.begin(), op_.tariff.end(), app) != op_.tariff.end();
    }

    void abort(const std::string& reason, std::size_t next_app)
    {
        log_("aborted: " + reason);
        result_.aborted = true;
        result_.abort_reason = reason;
        result_.roaming = op_.roaming_offered ? verdict::RoamingZeroRating::NotTested
                                              : verdict::RoamingZeroRating::NotOffered;
        // The verdict of the application in flight may already be pushed.
        std::set<std::string> done;
        for (const auto& v : result_.verdicts) done.insert(v.application);
        for (std::size_t i = std::min(next_app, cfg_.endpoints.size()); i < cfg_.endpoints.size(); ++i) {
            const auto& ep = cfg_.endpoints[i];
            if (done.count(ep.application)) continue;
            result_.verdicts.push_back(in_tariff(ep.application)
                                           ? verdict::indeterminate(op_.name, ep.application,
                                                                    tested_classes(cfg_, op_, ep), pending_evidence_)
                                           : verdict::not_available(op_.name, ep.application));
            pending_evidence_.clear();
        }
    }

    void setup()
    {
        credit::AdapterSpec adapter;
        adapter.id = op_.name;
        adapter.kind = credit::AdapterKind::SimulatedApi;
        std::chrono::milliseconds lag{0};
        engine::EngineOptions eo;
        eo.dummy_hostname = cfg_.dummy_hostname;

        if (auto* s = std::get_if<SimulatorTarget>(&op_.target)) {
            sim::SimulatorConfig sc;
            sc.profile = s->profile;
            sc.endpoints = cfg_.endpoints;
            sc.endpoints.push_back(cfg_.control_endpoint);
            sim_ = std::make_unique<sim::Simulator>(std::move(sc));
            control_url_ = sim_->control_url();
            eo.route = sim_->route();
            eo.trust_pem = sim_->ca_pem();
            dial_ = sim_->dial_map();
            adapter.parameters = {{"url", control_url_}, {"subscriber", sim_->subscriber_id()}};
            lag = s->profile.billing_lag;
        } else if (auto* a = std::get_if<ControlApiTarget>(&op_.target)) {
            control_url_ = a->url;
            httplib::Client cli(control_url_);
            auto res = cli.Get("/info");
            if (!res || res->status != 200) throw OperatorAbort{"control API unreachable at " + control_url_};
            auto info = json::parse(res->body);
            auto tcp = net::SocketAddress::parse(info.at("gateway_tcp").get<std::string>());
            auto udp = net::SocketAddress::parse(info.at("gateway_udp").get<std::string>());
            if (!tcp || !udp) throw OperatorAbort{"control API returned bad gateway addresses"};
            eo.route = transport::Route::gateway(*tcp, *udp);
            eo.trust_pem = info.value("ca_pem", "");
            for (const auto& d : info.value("dial", json::array())) fwd::parse_dial_entry(d.get<std::string>(), dial_);
            adapter.parameters = {{"url", control_url_}, {"subscriber", info.at("subscriber_id").get<std::string>()}};
            if (auto p = fetch_profile(control_url_)) lag = p->billing_lag;
        } else {
            eo.route = transport::Route::direct();
        }
        adapter.staleness_bound = lag;
        if (op_.adapter) adapter = *op_.adapter;
        adapter.validate();
        adapter_ = std::make_unique<credit::CreditAdapter>(adapter, opts_.clock);
        engine_ = std::make_unique<engine::TrafficEngine>(eo);
        set_session(sim::SessionKind::Domestic);
        baseline_ = fetch();
        log_("baseline " + std::to_string(baseline_.remaining) + " B, granularity " +
             std::to_string(baseline_.granularity) + " B");
    }

    void teardown()
    {
        forwarders_.clear();
        if (sim_) sim_->stop();
    }

    QuotaSnapshot fetch()
    {
        for (int attempt = 0;; ++attempt) {
            try {
                return adapter_->fetch_quota();
            } catch (const Error& e) {
                if (e.code() != Errc::RateLimited || attempt > 100) throw;
                opts_.clock->sleep_until(opts_.clock->now() + adapter_->spec().min_poll_interval / 4);
            }
        }
    }

    void set_session(sim::SessionKind kind)
    {
        if (control_url_.empty()) return;
        httplib::Client cli(control_url_);
        json body = {{"kind", std::string(to_string(kind))}};
        auto res = cli.Post("/session", body.dump(), "application/json");
        if (!res || res->status != 200) throw OperatorAbort{"cannot switch session to " + std::string(to_string(kind))};
    }

    fwd::Forwarder& relay(const EndpointSpec& ep, net::IpVersion v)
    {
        auto key = std::make_pair(ep.application, v);
        auto it = forwarders_.find(key);
        if (it != forwarders_.end()) return *it->second;
        fwd::ForwarderSpec spec;
        spec.listen_address = net::IpAddress::loopback(v);
        spec.dial = dial_;
        const auto& origin = ep.addresses(v).front();
        std::set<std::pair<Transport, std::uint16_t>> maps;
        for (auto p : cfg_.protocols)
            if (ep.supports(p)) maps.insert({transport_of(p), default_port(p)});
        for (auto [t, port] : maps) spec.port_maps.push_back({t, 0, net::SocketAddress{origin, port}});
        try {
            auto f = fwd::provision(spec, op_.provisioner);
            return *forwarders_.emplace(key, std::move(f)).first->second;
        } catch (const Error& e) {
            throw OperatorAbort{std::string("relay provisioning failed: ") + e.what()};
        }
    }

    engine::TrafficRecipe recipe(const EndpointSpec& ep, const Cell& c, std::uint64_t size)
    {
        const auto p = c.flow_class.protocol;
        const auto v = c.flow_class.ip_version;
        switch (c.experiment) {
        case Experiment::Verify: return engine::TrafficRecipe::verify(ep, p, v, size);
        case Experiment::IpProbe: return engine::TrafficRecipe::ip_probe(ep, p, v, size, cfg_.dummy_hostname);
        case Experiment::HostProbe: {
            auto& f = relay(ep, v);
            return engine::TrafficRecipe::host_probe(ep, p, v, size, f.address(),
                                                     f.port_for(transport_of(p), default_port(p)));
        }
        }
        throw Error(Errc::InvalidArgument, "bad experiment");
    }

    static report::PayloadRecord record(int cell, std::uint64_t target, const engine::TrafficReport& r)
    {
        report::PayloadRecord p;
        p.cell = cell;
        p.target_bytes = target;
        p.bytes_sent = r.bytes_sent;
        p.bytes_received = r.bytes_received;
        p.requests = r.request_count;
        p.connections = r.connections;
        p.protocol_used = r.protocol_used;
        return p;
    }

    /// One multiplexed session; returns the evidence cells. Attempts whose
    /// traffic cannot be decoded are repeated on the next settled baseline.
    std::vector<EvidenceCell> run_session(const std::string& label, const EndpointSpec& ep,
                                          const std::vector<Cell>& cells, bool roaming)
    {
        constexpr unsigned kRetries = 2;
        for (unsigned attempt = 0;; ++attempt) {
            auto [evidence, decoded] = run_session_once(attempt ? label + " (retry " + std::to_string(attempt) + ")" : label,
                                                        ep, cells, roaming);
            if (decoded || attempt == kRetries) return evidence;
        }
    }

    std::pair<std::vector<EvidenceCell>, bool> run_session_once(const std::string& label, const EndpointSpec& ep,
                                                                const std::vector<Cell>& cells, bool roaming)
    {
        report::SessionRecord rec;
        rec.label = label;
        rec.roaming = roaming;
        rec.started_ms = epoch_ms(opts_.clock->now());
        rec.baseline_remaining = baseline_.remaining;

        const auto g = decode_granularity(baseline_.granularity, cfg_.base_unit);
        billing::PayloadPlan plan;
        try {
            plan = billing::plan_session(static_cast<unsigned>(cells.size()), cfg_.base_unit, g, cfg_.slack(),
                                         baseline_.remaining);
        } catch (const Error& e) {
            throw OperatorAbort{label + ": " + e.what()};
        }
        rec.sizes = plan.sizes;
        rec.control_size = plan.control_size;
        rec.decode_granularity = plan.granularity;
        rec.slack_budget = plan.slack_budget;

        std::vector<EvidenceCell> evidence;
        for (std::size_t i = 0; i < cells.size(); ++i)
            evidence.push_back({cells[i].experiment, cells[i].flow_class, CellOutcome::Indeterminate, std::nullopt,
                                static_cast<unsigned>(i), ""});

        log_(label + ": " + std::to_string(cells.size()) + " payloads, control " + std::to_string(plan.control_size) +
             " B");
        bool traffic_ok = true;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            try {
                auto r = engine_->run_recipe(recipe(ep, cells[i], plan.sizes[i]));
                rec.payloads.push_back(record(static_cast<int>(i), plan.sizes[i], r));
                for (const auto& w : r.warnings) result_.warnings.push_back(label + " payload " + std::to_string(i) + ": " + w);
            } catch (const Error& e) {
                traffic_ok = false;
                report::PayloadRecord p;
                p.cell = static_cast<int>(i);
                p.target_bytes = plan.sizes[i];
                p.error = e.what();
                rec.payloads.push_back(p);
                evidence[i].note = e.what();
                result_.warnings.push_back(label + " payload " + std::to_string(i) + " failed: " + e.what());
            }
        }
        const auto& ctl = cfg_.control_endpoint;
        const Protocol ctl_protocol = ctl.supports(Protocol::Https) ? Protocol::Https : ctl.protocols.front();
        const net::IpVersion ctl_version = ctl.addresses_v4.empty() ? net::IpVersion::V6 : net::IpVersion::V4;
        try {
            auto r = engine_->generate_control_traffic(plan.control_size, ctl, ctl_protocol, ctl_version);
            rec.payloads.push_back(record(-1, plan.control_size, r));
        } catch (const Error& e) {
            rec.error = std::string("control payload failed: ") + e.what();
            finish(rec, evidence);
            throw OperatorAbort{label + ": " + rec.error};
        }

        // Overshoot beyond the slack would be read as extra billed payloads.
        std::uint64_t overshoot = 0;
        for (const auto& p : rec.payloads) {
            const auto total = p.bytes_sent + p.bytes_received;
            if (p.error.empty() && total > p.target_bytes) overshoot += total - p.target_bytes;
        }
        if (traffic_ok && overshoot > plan.slack_budget) {
            traffic_ok = false;
            result_.warnings.push_back(label + ": traffic overshot its targets by " + std::to_string(overshoot) +
                                       " B, more than the slack of " + std::to_string(plan.slack_budget) + " B");
            for (auto& c : evidence) c.note = "overshoot " + std::to_string(overshoot) + " B";
        }

        const auto tf = opts_.clock->now() + cfg_.settle_margin;
        const std::uint64_t expected =
            plan.control_size > baseline_.granularity ? plan.control_size - baseline_.granularity : 0;
        auto settlement = adapter_->await_settled_quota(expected, baseline_, cfg_.settle_timeout, tf);
        rec.settled = settlement.settled;
        rec.settled_remaining = settlement.snapshot.remaining;
        if (!settlement.settled) {
            rec.error = "ControlNotBilled: quota did not settle within the timeout";
            finish(rec, evidence);
            throw OperatorAbort{label + ": " + rec.error};
        }
        if (traffic_ok) {
            try {
                auto mask = decode_with_repoll(plan, settlement.snapshot);
                rec.settled_remaining = settlement.snapshot.remaining;
                std::uint32_t bits = 0;
                for (std::size_t i = 0; i < mask.flags.size(); ++i)
                    if (mask.flags[i]) bits |= 1u << i;
                rec.bitmask = bits;
                rec.residual = mask.residual;
                for (std::size_t i = 0; i < evidence.size(); ++i) {
                    evidence[i].outcome = mask.flags[i] ? CellOutcome::Billed : CellOutcome::ZeroRated;
                    evidence[i].session_bitmask = bits;
                }
            } catch (const Error& e) {
                rec.error = e.what();
                finish(rec, evidence);
                throw OperatorAbort{label + ": " + e.what()};
            }
        } else {
            rec.error = overshoot > plan.slack_budget ? "payload overshoot; session not decoded"
                                                      : "payload failed; session not decoded";
        }
        baseline_ = settlement.snapshot;
        finish(rec, evidence);
        return {evidence, traffic_ok};
    }

    /// A delta the plan cannot explain may still be moving (bytes in flight at
    /// the meter); it is re-read a few times before the session is given up.
    billing::BillingBitmask decode_with_repoll(const billing::PayloadPlan& plan, QuotaSnapshot& settled)
    {
        constexpr unsigned kRepolls = 3;
        for (unsigned attempt = 0;; ++attempt) {
            try {
                return billing::decode_billing(plan, baseline_, settled);
            } catch (const Error& e) {
                if (e.code() != Errc::UnattributableDelta || attempt == kRepolls) throw;
            }
            opts_.clock->sleep_until(opts_.clock->now() + adapter_->spec().min_poll_interval);
            settled = adapter_->fetch_quota();
        }
    }

    void finish(report::SessionRecord& rec, const std::vector<EvidenceCell>& evidence)
    {
        rec.cells = evidence;
        rec.finished_ms = epoch_ms(opts_.clock->now());
        pending_evidence_.insert(pending_evidence_.end(), evidence.begin(), evidence.end());
        result_.sessions.push_back(std::move(rec));
    }

    verdict::Verdict run_application(const EndpointSpec& ep, FlowClassSet& verify_zero_rated)
    {
        pending_evidence_.clear();
        const FlowClassSet tested = tested_classes(cfg_, op_, ep);
        if (tested.empty()) {
            result_.warnings.push_back(ep.application + ": no flow class to test");
            return verdict::indeterminate(op_.name, ep.application, tested, {});
        }
        std::vector<EvidenceCell> evidence = run_session(ep.application + "/verify", ep, verify_session(tested), false);
        for (const auto& c : evidence)
            if (c.outcome == CellOutcome::ZeroRated) verify_zero_rated.insert(c.flow_class);
        for (auto p : kAllProtocols) {
            auto cells = probe_session(p, verify_zero_rated, cfg_.experiments);
            if (cells.empty()) continue;
            auto more = run_session(ep.application + "/probe-" + std::string(to_string(p)), ep, cells, false);
            evidence.insert(evidence.end(), more.begin(), more.end());
        }
        for (auto it = forwarders_.begin(); it != forwarders_.end();) {
            if (it->first.first == ep.application) {
                it->second->teardown();
                it = forwarders_.erase(it);
            } else {
                ++it;
            }
        }
        pending_evidence_.clear();
        try {
            auto v = verdict::infer_verdict(op_.name, ep.application, tested, evidence);
            log_(ep.application + ": " + v.cell());
            return v;
        } catch (const Error& e) {
            result_.warnings.push_back(ep.application + ": " + e.what());
            return verdict::indeterminate(op_.name, ep.application, tested, evidence);
        }
    }

    verdict::RoamingZeroRating run_roaming(const std::map<std::string, FlowClassSet>& domestic_zero_rated)
    {
        if (control_url_.empty()) {
            result_.warnings.push_back("roaming sessions need a control API; roaming not tested");
            return verdict::RoamingZeroRating::NotTested;
        }
        bool any = false;
        for (const auto& [app, zr] : domestic_zero_rated) any = any || !zr.empty();
        if (!any) return verdict::RoamingZeroRating::NotTested;

        std::this_thread::sleep_for(cfg_.roaming_dwell);
        set_session(sim::SessionKind::Roaming);
        for (const auto& ep : cfg_.endpoints) {
            auto it = domestic_zero_rated.find(ep.application);
            if (it == domestic_zero_rated.end() || it->second.empty()) continue;
            auto cells = run_session(ep.application + "/roaming-verify", ep, verify_session(it->second), true);
            result_.roaming_evidence.insert(result_.roaming_evidence.end(), cells.begin(), cells.end());
        }
        pending_evidence_.clear();
        std::this_thread::sleep_for(cfg_.roaming_dwell);
        set_session(sim::SessionKind::Domestic);
        try {
            return verdict::infer_roaming(result_.roaming_evidence);
        } catch (const Error& e) {
            result_.warnings.push_back(e.what());
            return verdict::RoamingZeroRating::NotTested;
        }
    }

    const CampaignConfig& cfg_;
    const OperatorConfig& op_;
    const RunOptions& opts_;
    std::function<void(const std::string&)> log_;
    report::OperatorResult result_;
    std::unique_ptr<sim::Simulator> sim_;
    std::string control_url_;
    transport::DialMap dial_;
    std::unique_ptr<engine::TrafficEngine> engine_;
    std::unique_ptr<credit::CreditAdapter> adapter_;
    std::map<std::pair<std::string, net::IpVersion>, std::unique_ptr<fwd::Forwarder>> forwarders_;
    QuotaSnapshot baseline_;
    std::vector<EvidenceCell> pending_evidence_;
};

} // namespace

report::CampaignReport run_campaign(const CampaignConfig& config, const RunOptions& options)
{
    report::CampaignReport out;
    out.base_unit = config.base_unit;
    out.started_ms = epoch_ms(options.clock->now());
    for (const auto& e : config.endpoints) out.applications.push_back(e.application);

    std::vector<const OperatorConfig*> ops;
    for (const auto& op : config.operators)
        if (!options.only_operator || op.name == *options.only_operator) ops.push_back(&op);
    if (options.only_operator && ops.empty())
        throw Error(Errc::ConfigInvalid, "no operator named " + *options.only_operator);

    std::vector<report::OperatorResult> results(ops.size());
    std::mutex log_mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < ops.size();) {
            auto log = [&, name = ops[i]->name](const std::string& msg) {
                if (!options.log) return;
                std::lock_guard lk(log_mu);
                options.log(name + ": " + msg);
            };
            results[i] = OperatorRun(config, *ops[i], options, log).run();
        }
    };
    const std::size_t n = std::min<std::size_t>(std::max(1u, config.parallel_operators), ops.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    out.operators = std::move(results);
    out.finished_ms = epoch_ms(options.clock->now());
    return out;
}

} // namespace zr::campaign
