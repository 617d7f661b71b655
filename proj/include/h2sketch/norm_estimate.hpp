#pragma once

#include <cstdint>

#include "h2sketch/sampler.hpp"

namespace h2sketch {

/// Power-iteration estimate of ||K||_2 from a fixed-seed Gaussian start
/// vector. Returns 0 for the zero operator.
double estimate_operator_norm(const Sampler& op, int iters = 10, std::uint64_t seed = 0);

/// Power-iteration estimate of ||A - B||_2 / ||B||_2.
double estimate_rel_error(const Sampler& a, const Sampler& b, int iters = 10,
                          std::uint64_t seed = 0);

}  // namespace h2sketch
