#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "h2sketch/common.hpp"

namespace h2sketch {

// Counter-based random numbers: every value is a pure function of its key, so
// a random matrix is identical no matter which thread fills which entry.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  // Uniform in (0, 1).
  double uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) const noexcept {
    return to_unit(bits(a, b, c, 0));
  }

  // Standard normal via Box-Muller on two independent draws of the same key.
  double gaussian(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) const noexcept {
    const double u1 = to_unit(bits(a, b, c, 1));
    const double u2 = to_unit(bits(a, b, c, 2));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // rows x cols Gaussian matrix; entry (i, j) keyed on (round, row_offset + i, j).
  Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t round, Index row_offset = 0) const {
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i)
        out(i, j) = gaussian(round, static_cast<std::uint64_t>(row_offset + i),
                             static_cast<std::uint64_t>(j));
    return out;
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                     std::uint64_t lane) const noexcept {
    std::uint64_t h = mix(key_ ^ a);
    h = mix(h ^ (b * 0xd1b54a32d192ed03ULL));
    h = mix(h ^ (c * 0xaef17502108ef2d9ULL));
    return mix(h + lane);
  }

  static double to_unit(std::uint64_t x) noexcept {
    // 53 random bits, shifted off zero.
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t key_;
};

}  // namespace h2sketch
