#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "h2sketch/common.hpp"
#include "h2sketch/geometry.hpp"
#include "h2sketch/kernels.hpp"
#include "h2sketch/norm_estimate.hpp"
#include "h2sketch/sampler.hpp"

namespace h2sketch {

class SketchConstructor;
class H2Reader;

/// Symmetric H2 matrix in tree ordering.
///
/// Leaf clusters carry explicit bases U, every other cluster below the root
/// is tied to its parent by a transfer matrix E (r_child x r_parent). An
/// admissible block (s, t) is U_s B_{s,t} U_t^T with U expanded through the
/// transfer chain; dense leaves are stored as is. Couplings and dense blocks
/// are kept for both (s, t) and (t, s).
class H2Matrix {
 public:
  H2Matrix() = default;
  /// Empty representation: all ranks zero, all blocks zero.
  H2Matrix(ClusterTree tree, MatrixTree mtree);

  Index size() const { return tree_.point_count(); }
  const ClusterTree& tree() const { return tree_; }
  const MatrixTree& matrix_tree() const { return mtree_; }

  /// Highest cluster level that carries a basis (0 when the root is a leaf).
  int top_level() const { return tree_.level_count() - 1; }

  Index rank(Index node) const { return static_cast<Index>(skeleton(node).size()); }
  std::span<const Index> skeleton(Index node) const { return skeletons_[idx(node)]; }
  const Matrix& leaf_basis(Index leaf) const { return leaf_bases_[idx(leaf)]; }
  const Matrix& transfer(Index node) const { return transfers_[idx(node)]; }

  /// Aligned with matrix_tree().far(node).
  std::span<const Matrix> couplings(Index node) const { return couplings_[idx(node)]; }
  /// Aligned with matrix_tree().near(leaf).
  std::span<const Matrix> dense_blocks(Index leaf) const { return dense_[idx(leaf)]; }

  const Matrix* coupling(Index s, Index t) const;
  const Matrix* dense_block(Index s, Index t) const;

 private:
  friend class SketchConstructor;
  friend class H2Reader;

  static std::size_t idx(Index i) { return static_cast<std::size_t>(i); }

  ClusterTree tree_;
  MatrixTree mtree_;
  std::vector<std::vector<Index>> skeletons_;
  std::vector<Matrix> leaf_bases_;
  std::vector<Matrix> transfers_;
  std::vector<std::vector<Matrix>> couplings_;
  std::vector<std::vector<Matrix>> dense_;
};

/// Upward pass, coupling products, downward pass and dense leaves.
Matrix matvec(const H2Matrix& m, const Matrix& x);

/// Basis of a cluster expanded through its transfer chain, size x rank.
Matrix expand_basis(const H2Matrix& m, Index node);

/// Entries of the represented matrix. Each (i, j) is located in its unique
/// matrix-tree leaf; admissible entries are formed from basis rows propagated
/// leaf-to-level, never from full expansions. Throws std::out_of_range.
std::vector<Matrix> extract_entries(const H2Matrix& m, std::span<const BlockRequest> requests);

inline constexpr Index dense_guard_default = 16384;

/// Dense N x N matrix; throws std::length_error above the guard.
Matrix to_dense(const H2Matrix& m, Index guard = dense_guard_default);

struct MemoryReport {
  std::size_t basis = 0;     ///< U
  std::size_t transfer = 0;  ///< E
  std::size_t coupling = 0;  ///< B
  std::size_t dense = 0;     ///< D
  std::size_t indices = 0;   ///< skeleton index sets

  std::size_t total() const { return basis + transfer + coupling + dense + indices; }
};

/// Bytes of stored reals (8 bytes each) and skeleton indices (8 bytes each).
MemoryReport memory_report(const H2Matrix& m);

class H2Sampler final : public Sampler {
 public:
  explicit H2Sampler(std::shared_ptr<const H2Matrix> m) : m_(std::move(m)) {}
  Index size() const override { return m_->size(); }
  Matrix apply(const Matrix& omega) const override { return matvec(*m_, omega); }

 private:
  std::shared_ptr<const H2Matrix> m_;
};

class H2EntryEvaluator final : public EntryEvaluator {
 public:
  explicit H2EntryEvaluator(std::shared_ptr<const H2Matrix> m) : m_(std::move(m)) {}
  Index size() const override { return m_->size(); }
  void eval_block(std::span<const Index> rows, std::span<const Index> cols,
                  Eigen::Ref<Matrix> out) const override;
  std::vector<Matrix> eval_blocks(std::span<const BlockRequest> requests) const override;

 private:
  std::shared_ptr<const H2Matrix> m_;
};

/// Symmetric low-rank term factor * factor^T (tree ordering).
struct LowRankUpdate {
  Matrix factor;
};

/// Omega -> M Omega + U (U^T Omega).
std::unique_ptr<Sampler> make_updated_sampler(std::shared_ptr<const H2Matrix> m,
                                              const LowRankUpdate& up);
/// (i, j) -> M(i, j) + sum_p U(i, p) U(j, p).
std::unique_ptr<EntryEvaluator> make_updated_evaluator(std::shared_ptr<const H2Matrix> m,
                                                       const LowRankUpdate& up);

}  // namespace h2sketch
