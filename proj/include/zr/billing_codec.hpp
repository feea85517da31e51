#pragma once

// Positional (power-of-two) payload sizing so that a single quota delta
// identifies which payloads of a session were billed.
//
// Payload i carries base_unit * 2^i bytes, the control payload carries
// base_unit * 2^n. Because the sizes are distinct powers of two, the billed
// amount on top of the control payload has exactly one binary decomposition.

#include <cstdint>
#include <optional>
#include <vector>

#include "zr/quota.hpp"

namespace zr::billing {

inline constexpr unsigned kMaxPayloads = 16;

struct PayloadPlan {
    std::uint64_t base_unit = 0;
    unsigned payload_count = 0;
    /// sizes[i] == base_unit << i, executed in ascending order.
    std::vector<std::uint64_t> sizes;
    std::uint64_t control_size = 0;
    /// Reporting resolution the plan was validated against.
    std::uint64_t granularity = 1;
    /// Tolerated unattributed traffic per session.
    std::uint64_t slack_budget = 0;

    /// Payloads plus control: base_unit * (2^(n+1) - 1).
    std::uint64_t total_bytes() const;
};

struct BillingBitmask {
    /// flags[i] is true when payload i was billed, false when zero-rated.
    std::vector<bool> flags;
    /// Billed bytes not explained by the decoded payloads (may be negative).
    std::int64_t residual = 0;

    bool operator==(const BillingBitmask&) const = default;
};

/// Throws Error{GranularityTooCoarse} when base_unit < 2 * granularity and
/// Error{PlanTooLarge} when the plan exceeds `remaining_bound`.
PayloadPlan plan_session(unsigned payload_count, std::uint64_t base_unit, std::uint64_t granularity,
                         std::uint64_t slack_budget = 0,
                         std::optional<std::uint64_t> remaining_bound = std::nullopt);

/// Decodes an observed quota drop (before - after).
///
/// Errors: NegativeDelta (quota grew), ControlNotBilled (delta below the
/// control payload minus granularity/2; re-poll), UnattributableDelta
/// (residual outside [-g/2, g/2 + slack] or more than every payload billed).
BillingBitmask decode_delta(const PayloadPlan& plan, std::int64_t delta);

BillingBitmask decode_billing(const PayloadPlan& plan, const QuotaSnapshot& before, const QuotaSnapshot& after);

/// Largest n with base_unit * (2^(n+1) - 1) <= remaining, capped at
/// kMaxPayloads; 0 means the session cannot run.
unsigned max_payloads_for_quota(std::uint64_t remaining, std::uint64_t base_unit);

} // namespace zr::billing
