#pragma once

// Campaign results and their JSON, CSV and text renderings.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zr/billing_codec.hpp"
#include "zr/verdict.hpp"

namespace zr::report {

/// Traffic of one payload (or the control payload, cell == -1).
struct PayloadRecord {
    int cell = -1;
    std::uint64_t target_bytes = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint32_t requests = 0;
    std::uint32_t connections = 0;
    std::string protocol_used;
    std::string error;

    bool operator==(const PayloadRecord&) const = default;
};

struct SessionRecord {
    std::string label;
    bool roaming = false;
    std::vector<verdict::EvidenceCell> cells;
    std::vector<std::uint64_t> sizes;
    std::uint64_t control_size = 0;
    std::uint64_t decode_granularity = 1;
    std::uint64_t slack_budget = 0;
    std::uint64_t baseline_remaining = 0;
    std::uint64_t settled_remaining = 0;
    bool settled = false;
    std::optional<std::uint32_t> bitmask;
    std::int64_t residual = 0;
    std::string error;
    std::vector<PayloadRecord> payloads;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;

    bool operator==(const SessionRecord&) const = default;
};

struct OperatorResult {
    std::string name;
    verdict::RoamingZeroRating roaming = verdict::RoamingZeroRating::NotTested;
    std::vector<verdict::EvidenceCell> roaming_evidence;
    /// One per campaign application, in campaign order.
    std::vector<verdict::Verdict> verdicts;
    bool aborted = false;
    std::string abort_reason;
    std::vector<std::string> warnings;
    std::vector<SessionRecord> sessions;

    bool operator==(const OperatorResult&) const = default;
};

struct CampaignReport {
    std::uint64_t base_unit = 0;
    std::vector<std::string> applications;
    std::vector<OperatorResult> operators;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;

    bool aborted() const;
    bool operator==(const CampaignReport&) const = default;
};

/// Normalized output drops timings, quota readings, traffic counters and
/// warnings so identical campaigns serialize byte-identically.
nlohmann::json to_json(const CampaignReport& r, bool normalized = false);
/// Throws Error{ParseFailure}.
CampaignReport report_from_json(const nlohmann::json& j);

std::string render_csv(const CampaignReport& r);
/// Fixed-width matrix with the legend symbols of the published table.
std::string render_text(const CampaignReport& r);
std::string render_roaming(verdict::RoamingZeroRating r);

enum class Format { Json, Csv, Text };
std::optional<Format> parse_format(std::string_view s) noexcept;

/// Writes report.json / report.csv / report.txt into `dir` (created if
/// missing). Throws Error{IoFailure}. Returns the written paths.
std::vector<std::string> emit_reports(const CampaignReport& r, const std::string& dir,
                                      const std::vector<Format>& formats, bool normalized = false);

} // namespace zr::report
