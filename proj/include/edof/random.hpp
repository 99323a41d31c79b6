#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace edof
{

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based seed derivation: the stream for (base, c0, c1, ...) depends only
// on its coordinates, never on how many draws other streams made before it.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> counters)
{
    std::uint64_t h = splitmix64(base);
    for (auto c : counters)
        h = splitmix64(h ^ splitmix64(c + 0x632BE59BD9B4E019ull));
    return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> counters)
{
    return Rng(derive_seed(base, counters));
}

} // namespace edof
