#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ael {

// mt19937_64 output is fixed by the standard, so streams are identical on every platform.
using Rng = std::mt19937_64;

// Independent sub-stream seed for a labelled purpose ("validate", "test", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

// Distribution code from Boost.Random, whose algorithms do not vary between
// standard library vendors.
double sample_beta(double alpha, double beta, Rng& rng);
double sample_normal(double mean, double stddev, Rng& rng);
double sample_uniform(Rng& rng);

}  // namespace ael
