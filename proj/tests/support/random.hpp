#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace zr::testing {

inline std::mt19937_64 seeded_rng(std::uint64_t salt = 0)
{
    return std::mt19937_64(0x5eed0000ULL + salt);
}

inline std::string random_label(std::mt19937_64& rng, std::size_t min_len = 1, std::size_t max_len = 12)
{
    static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<std::size_t> ch(0, sizeof(kAlphabet) - 2);
    std::string s;
    for (std::size_t i = len(rng); i > 0; --i) s += kAlphabet[ch(rng)];
    return s;
}

inline std::string random_hostname(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> labels(2, 4);
    std::string out;
    for (int i = labels(rng); i > 0; --i) out += (out.empty() ? "" : ".") + random_label(rng);
    return out;
}

} // namespace zr::testing
