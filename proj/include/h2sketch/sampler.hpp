#pragma once

#include "h2sketch/common.hpp"

namespace h2sketch {

/// Black-box symmetric linear operator Y = K * Omega, in tree ordering.
class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual Index size() const = 0;
  /// omega is size() x d; returns size() x d.
  virtual Matrix apply(const Matrix& omega) const = 0;
};

}  // namespace h2sketch
