#pragma once

#include <cstdint>
#include <random>

namespace ubsgd {

using Rng = std::mt19937_64;

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Bijective on 64-bit words.
std::uint64_t splitmix64(std::uint64_t z);

// Child seed for stream `index` of a master seed:
//   splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15)
// Distinct indices give distinct outputs for a fixed master.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace ubsgd
