#include "h2sketch/norm_estimate.hpp"

#include <limits>
#include <stdexcept>

#include "h2sketch/random.hpp"

namespace h2sketch {

namespace {

template <typename Apply>
double power_iteration(Index n, int iters, std::uint64_t seed, Apply&& apply) {
  if (iters < 1) throw std::invalid_argument("power iteration needs at least one step");
  Matrix x = CounterRng(seed, 0x5eed).gaussian_matrix(n, 1, 0);
  x /= x.norm();
  double estimate = 0.0;
  for (int it = 0; it < iters; ++it) {
    Matrix y = apply(x);
    estimate = y.norm();
    if (estimate == 0.0) return 0.0;
    x = y / estimate;
  }
  return estimate;
}

}  // namespace

double estimate_operator_norm(const Sampler& op, int iters, std::uint64_t seed) {
  return power_iteration(op.size(), iters, seed, [&](const Matrix& x) { return op.apply(x); });
}

double estimate_rel_error(const Sampler& a, const Sampler& b, int iters, std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("samplers have different dimensions");
  const double diff = power_iteration(a.size(), iters, seed, [&](const Matrix& x) {
    Matrix y = a.apply(x);
    y -= b.apply(x);
    return y;
  });
  const double base = estimate_operator_norm(b, iters, seed);
  if (base == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / base;
}

}  // namespace h2sketch
