#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace zr {

/// A point-in-time remaining-quota reading. `remaining` is always a multiple
/// of `granularity` once it has passed through normalize().
struct QuotaSnapshot {
    std::uint64_t remaining = 0;
    std::uint64_t granularity = 1;
    std::chrono::system_clock::time_point taken_at{};
    std::string source;
    std::chrono::milliseconds staleness_bound{0};
};

/// Floors `remaining` to a granularity multiple. Idempotent.
inline QuotaSnapshot normalize(QuotaSnapshot s)
{
    if (s.granularity == 0) s.granularity = 1;
    s.remaining -= s.remaining % s.granularity;
    return s;
}

} // namespace zr
