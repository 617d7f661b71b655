#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "h2sketch/common.hpp"
#include "h2sketch/geometry.hpp"
#include "h2sketch/sampler.hpp"

namespace h2sketch {

struct ExponentialCovariance {
  double correlation_length = 0.2;
};

/// cos(k r) / r off the diagonal; the diagonal is defined as 0.
struct HelmholtzIE {
  double wavenumber = 3.0;
};

using KernelSpec = std::variant<ExponentialCovariance, HelmholtzIE>;

/// Throws std::invalid_argument unless the kernel parameter is positive and finite.
void validate(const KernelSpec& spec);

inline double distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::sqrt(s);
}

double eval_kernel_at_distance(const KernelSpec& spec, double r);

/// Same arithmetic as the batched evaluators, so results agree bit for bit.
double eval_entry(const KernelSpec& spec, std::span<const double> x, std::span<const double> y);

struct BlockRequest {
  std::span<const Index> rows;
  std::span<const Index> cols;
};

/// Entry oracle for a symmetric matrix in tree ordering.
class EntryEvaluator {
 public:
  virtual ~EntryEvaluator() = default;
  virtual Index size() const = 0;
  /// out is rows.size() x cols.size().
  virtual void eval_block(std::span<const Index> rows, std::span<const Index> cols,
                          Eigen::Ref<Matrix> out) const = 0;
  /// Evaluates every request; blocks may be filled concurrently.
  virtual std::vector<Matrix> eval_blocks(std::span<const BlockRequest> requests) const;
};

/// Range-checked batched generation; an out-of-range index throws
/// std::out_of_range naming the offending request.
std::vector<Matrix> generate_blocks(const EntryEvaluator& ev, std::span<const BlockRequest> requests);

/// Kernel entries over points given in tree order.
class KernelEvaluator final : public EntryEvaluator {
 public:
  KernelEvaluator(PointSet tree_ordered_points, KernelSpec spec);

  Index size() const override { return points_.size(); }
  void eval_block(std::span<const Index> rows, std::span<const Index> cols,
                  Eigen::Ref<Matrix> out) const override;

  const PointSet& points() const { return points_; }
  const KernelSpec& spec() const { return spec_; }

 private:
  PointSet points_;
  KernelSpec spec_;
};

/// Entries of an explicit symmetric matrix (already in tree order).
class DenseMatrixEvaluator final : public EntryEvaluator {
 public:
  explicit DenseMatrixEvaluator(std::shared_ptr<const Matrix> matrix);

  Index size() const override { return matrix_->rows(); }
  void eval_block(std::span<const Index> rows, std::span<const Index> cols,
                  Eigen::Ref<Matrix> out) const override;

 private:
  std::shared_ptr<const Matrix> matrix_;
};

/// K * Omega with kernel entries recomputed tile by tile; O(N^2) per call but
/// O(N) memory.
class KernelSampler final : public Sampler {
 public:
  KernelSampler(PointSet tree_ordered_points, KernelSpec spec);

  Index size() const override { return points_.size(); }
  Matrix apply(const Matrix& omega) const override;

 private:
  PointSet points_;
  KernelSpec spec_;
};

class DenseMatrixSampler final : public Sampler {
 public:
  explicit DenseMatrixSampler(std::shared_ptr<const Matrix> matrix);

  Index size() const override { return matrix_->rows(); }
  Matrix apply(const Matrix& omega) const override;

 private:
  std::shared_ptr<const Matrix> matrix_;
};

/// Full kernel matrix in tree order.
Matrix dense_kernel_matrix(const PointSet& tree_ordered_points, const KernelSpec& spec);

/// Reorders a matrix given in original point order into tree order.
Matrix to_tree_order(const Matrix& original, std::span<const Index> permutation);

}  // namespace h2sketch
