#pragma once

// Campaign configuration, session layout and execution.

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "zr/credit_adapter.hpp"
#include "zr/endpoint.hpp"
#include "zr/forwarder.hpp"
#include "zr/report.hpp"
#include "zr/sim/profile.hpp"
#include "zr/traffic_engine.hpp"

namespace zr::campaign {

/// In-process simulator loaded with a profile.
struct SimulatorTarget {
    sim::OperatorProfile profile;
};
/// Separately launched simulator, driven through its control API.
struct ControlApiTarget {
    std::string url;
};
/// Real network: traffic leaves directly, quota comes from the adapter.
struct DirectTarget {};

using Target = std::variant<SimulatorTarget, ControlApiTarget, DirectTarget>;

struct OperatorConfig {
    std::string name;
    Target target = DirectTarget{};
    /// Required for DirectTarget; defaults to the control API otherwise.
    std::optional<credit::AdapterSpec> adapter;
    /// Applications in the operator's zero-rating tariff.
    std::vector<std::string> tariff;
    std::vector<net::IpVersion> ip_versions = {net::IpVersion::V4};
    /// Tariff includes roaming.
    bool roaming_offered = false;
    fwd::ProvisionerSpec provisioner;
};

struct CampaignConfig {
    std::vector<OperatorConfig> operators;
    std::vector<EndpointSpec> endpoints;
    EndpointSpec control_endpoint;
    std::vector<engine::Experiment> experiments = {std::begin(engine::kAllExperiments),
                                                   std::end(engine::kAllExperiments)};
    std::vector<Protocol> protocols = {std::begin(kAllProtocols), std::end(kAllProtocols)};
    std::uint64_t base_unit = 64 * 1024;
    /// Defaults to base_unit / 4.
    std::optional<std::uint64_t> slack_bytes;
    std::string dummy_hostname = "example.com";
    std::chrono::milliseconds roaming_dwell{60000};
    std::chrono::milliseconds settle_timeout{std::chrono::minutes(10)};
    /// Added to the end of traffic before settlement is judged.
    std::chrono::milliseconds settle_margin{200};
    unsigned parallel_operators = 4;
    std::string report_dir = "reports";
    std::vector<report::Format> formats = {report::Format::Json, report::Format::Csv, report::Format::Text};

    std::uint64_t slack() const { return slack_bytes.value_or(base_unit / 4); }
};

/// Relative profile paths resolve against `base_dir`. Throws Error{ConfigInvalid}.
CampaignConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
CampaignConfig load_config(const std::string& path);

/// Static checks plus, for simulator targets, the rule check of the control
/// endpoint and the quota bound. Throws Error{ConfigInvalid} listing every
/// problem. Control-API targets are checked over the network.
void validate(const CampaignConfig& config);

/// A cell is an (experiment, flow class) pair.
struct Cell {
    engine::Experiment experiment;
    FlowClass flow_class;
    bool operator==(const Cell&) const = default;
};

/// Global order: protocol (HTTP, HTTPS, HTTP3), then IP version (v4, v6),
/// then experiment (verify, ip-probe, host-probe). Values 0..17.
unsigned cell_order(const Cell& c);

/// Verify cells of `tested` in global order.
std::vector<Cell> verify_session(FlowClassSet tested);
/// Probe cells for `protocol` restricted to `verified_zero_rated`, in global order.
std::vector<Cell> probe_session(Protocol protocol, FlowClassSet verified_zero_rated,
                                const std::vector<engine::Experiment>& experiments);

/// Granularity the decoder is given: at least twice the reported one (both
/// readings are floored) and at least base_unit / 8 (transport jitter).
std::uint64_t decode_granularity(std::uint64_t reported, std::uint64_t base_unit);

/// Flow classes of `endpoint` that the campaign tests for `op`.
FlowClassSet tested_classes(const CampaignConfig& config, const OperatorConfig& op, const EndpointSpec& endpoint);

struct RunOptions {
    std::optional<std::string> only_operator;
    std::function<void(const std::string&)> log;
    std::shared_ptr<credit::Clock> clock = credit::system_clock();
};

/// Operators run in parallel up to parallel_operators; cells within one
/// operator strictly in sequence.
report::CampaignReport run_campaign(const CampaignConfig& config, const RunOptions& options = {});

} // namespace zr::campaign
