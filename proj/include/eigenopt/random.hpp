#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace eigenopt {

// All stochastic code draws from a 64-bit Mersenne twister. The helpers below
// map raw engine output to indices and reals without going through the
// standard distributions, whose output differs across standard libraries.
using Rng = std::mt19937_64;

// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

// Uniform real in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

// SplitMix64 finalizer; used to derive independent per-run seeds from a base.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace eigenopt
