#pragma once

#include <cstdint>
#include <random>

namespace roughflow {

using Rng = std::mt19937_64;

/// Independent generator for (master seed, stream index). Streams with
/// distinct indices never share state, which is what keeps Monte Carlo
/// replicas reproducible regardless of how they are scheduled.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Child seed for a replica or sub-task.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace roughflow
