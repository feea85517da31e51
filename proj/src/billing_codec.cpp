#include "zr/billing_codec.hpp"

#include <string>

#include "zr/error.hpp"

namespace zr::billing {

namespace {

using u128 = unsigned __int128;

u128 plan_total(unsigned n, std::uint64_t base_unit)
{
    return static_cast<u128>(base_unit) * ((u128{1} << (n + 1)) - 1);
}

} // namespace

std::uint64_t PayloadPlan::total_bytes() const
{
    return static_cast<std::uint64_t>(plan_total(payload_count, base_unit));
}

PayloadPlan plan_session(unsigned payload_count, std::uint64_t base_unit, std::uint64_t granularity,
                         std::uint64_t slack_budget, std::optional<std::uint64_t> remaining_bound)
{
    if (payload_count < 1 || payload_count > kMaxPayloads)
        throw Error(Errc::InvalidArgument, "payload_count must be in 1..16, got " + std::to_string(payload_count));
    if (base_unit == 0) throw Error(Errc::InvalidArgument, "base_unit must be positive");
    if (granularity == 0) throw Error(Errc::InvalidArgument, "granularity must be positive");
    if (static_cast<u128>(base_unit) < 2 * static_cast<u128>(granularity))
        throw Error(Errc::GranularityTooCoarse, "base_unit " + std::to_string(base_unit) +
                                                    " < 2 x granularity " + std::to_string(granularity));

    u128 total = plan_total(payload_count, base_unit);
    if (total > UINT64_MAX) throw Error(Errc::PlanTooLarge, "plan size overflows 64 bits");
    if (remaining_bound && total > *remaining_bound)
        throw Error(Errc::PlanTooLarge, "plan needs " + std::to_string(static_cast<std::uint64_t>(total)) +
                                            " bytes, only " + std::to_string(*remaining_bound) + " remain");

    PayloadPlan plan;
    plan.base_unit = base_unit;
    plan.payload_count = payload_count;
    plan.granularity = granularity;
    plan.slack_budget = slack_budget;
    plan.sizes.reserve(payload_count);
    for (unsigned i = 0; i < payload_count; ++i) plan.sizes.push_back(base_unit << i);
    plan.control_size = base_unit << payload_count;
    return plan;
}

BillingBitmask decode_delta(const PayloadPlan& plan, std::int64_t delta)
{
    if (delta < 0) throw Error(Errc::NegativeDelta, "quota increased by " + std::to_string(-delta) + " bytes");

    // All comparisons against granularity/2 are done on doubled values so
    // odd granularities stay exact.
    const __int128 g = plan.granularity;
    const __int128 base = plan.base_unit;
    const __int128 control = plan.control_size;
    const __int128 d = delta;

    if (2 * d < 2 * control - g)
        throw Error(Errc::ControlNotBilled, "delta " + std::to_string(delta) + " below control payload " +
                                                std::to_string(plan.control_size));

    const __int128 billed = d - control;
    // Nearest base_unit multiple, ties rounding up.
    __int128 units = billed >= 0 ? (2 * billed + base) / (2 * base) : 0;
    const __int128 max_units = (__int128{1} << plan.payload_count) - 1;
    if (units > max_units)
        throw Error(Errc::UnattributableDelta, "billed amount exceeds every payload of the plan");

    const __int128 residual = billed - units * base;
    if (2 * residual < -g || 2 * residual > g + 2 * static_cast<__int128>(plan.slack_budget))
        throw Error(Errc::UnattributableDelta,
                    "residual " + std::to_string(static_cast<std::int64_t>(residual)) + " outside tolerance");

    BillingBitmask out;
    out.flags.resize(plan.payload_count);
    for (unsigned i = 0; i < plan.payload_count; ++i) out.flags[i] = ((units >> i) & 1) != 0;
    out.residual = static_cast<std::int64_t>(residual);
    return out;
}

BillingBitmask decode_billing(const PayloadPlan& plan, const QuotaSnapshot& before, const QuotaSnapshot& after)
{
    if (after.remaining > before.remaining)
        throw Error(Errc::NegativeDelta,
                    "quota increased by " + std::to_string(after.remaining - before.remaining) + " bytes");
    std::uint64_t delta = before.remaining - after.remaining;
    if (delta > static_cast<std::uint64_t>(INT64_MAX)) throw Error(Errc::UnattributableDelta, "delta too large");
    return decode_delta(plan, static_cast<std::int64_t>(delta));
}

unsigned max_payloads_for_quota(std::uint64_t remaining, std::uint64_t base_unit)
{
    if (base_unit == 0) return 0;
    unsigned best = 0;
    for (unsigned n = 1; n <= kMaxPayloads; ++n) {
        if (plan_total(n, base_unit) <= remaining) best = n;
        else break;
    }
    return best;
}

} // namespace zr::billing
