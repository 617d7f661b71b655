#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "h2sketch/common.hpp"
#include "h2sketch/dense.hpp"
#include "h2sketch/geometry.hpp"
#include "h2sketch/h2_matrix.hpp"
#include "h2sketch/kernels.hpp"
#include "h2sketch/norm_estimate.hpp"
#include "h2sketch/random.hpp"
#include "h2sketch/sampler.hpp"

namespace h2sketch {

struct ConstructionConfig {
  double eps = 1e-6;          ///< relative tolerance
  Index sample_block = 32;    ///< d: columns drawn per sampling round
  Index oversampling = 10;    ///< p, fixed mode with a representative rank
  /// Fixed mode draws representative_rank + oversampling columns when set,
  /// sample_block columns otherwise.
  std::optional<Index> representative_rank;
  Index max_samples = 1024;
  bool adaptive = true;
  double eta = 0.7;           ///< used by callers that build the trees
  Index leaf_size = 64;       ///< used by callers that build the trees
  std::uint64_t seed = 0;
  int norm_iterations = 10;
  /// Skips the power iteration when the operator norm is already known.
  std::optional<double> operator_norm;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  Index initial_samples() const;
};

struct PhaseTimes {
  double rand = 0;
  double sample = 0;
  double bsr_subtract = 0;
  double convergence = 0;
  double id = 0;
  double shrink = 0;
  double gen = 0;
  double misc = 0;

  double sum() const { return rand + sample + bsr_subtract + convergence + id + shrink + gen + misc; }
};

struct LevelStats {
  int level = 0;
  Index rank_min = 0;
  Index rank_max = 0;
  int rounds = 0;          ///< refinement rounds spent at this level
  Index samples = 0;       ///< sample columns in use when the level was skeletonized
};

struct ConstructionStats {
  Index total_samples = 0;
  double norm_estimate = 0;
  double eps_abs = 0;
  std::vector<LevelStats> levels;
  PhaseTimes times_ms;
  double total_ms = 0;
};

/// Adaptive sampling ran past max_samples before every node of a level
/// converged, or the sampler produced non-finite values.
class ConstructionError : public std::runtime_error {
 public:
  ConstructionError(const std::string& what, int level) : std::runtime_error(what), level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

struct ConstructionResult {
  H2Matrix matrix;
  ConstructionStats stats;
};

/// One product block * omega to be removed from a sample block.
struct PartnerTerm {
  Index partner = 0;
  const Matrix* block = nullptr;
  const Matrix* omega = nullptr;
};

/// y -= sum_b block_b * omega_b, accumulated in ascending partner order.
/// Throws std::invalid_argument on a dimension mismatch or unsorted partners.
void subtract_far_contributions(Eigen::Ref<Matrix> y, std::span<const PartnerTerm> terms);

struct NodeSkeleton {
  IDResult id;
  Matrix y_next;      ///< yloc(J, :)
  Matrix omega_next;  ///< W^T omega
};

/// Row ID of a node's local samples plus the shrink / projection that carry
/// its samples and random vectors to the parent level.
NodeSkeleton skeletonize_node(const Matrix& yloc, const Matrix& omega, double tol_abs);

/// Bottom-up sketching construction.
///
/// Levels are processed from the leaves up to the children of the root.
/// At every level the sample blocks are stripped of the contributions already
/// represented (dense leaves at level 1, children's couplings above), the
/// adaptive loop adds sample rounds until each node passes the convergence
/// test, and a row ID turns the local samples into bases / transfers and
/// skeletons. Couplings are generated from the skeletons afterwards.
///
/// The step methods expose the per-level state for inspection; run() drives
/// them in order.
class SketchConstructor {
 public:
  SketchConstructor(const Sampler& sampler, const EntryEvaluator& evaluator,
                    const ClusterTree& tree, const MatrixTree& mtree, ConstructionConfig cfg);

  ConstructionResult run();

  /// Norm estimate, initial round of samples (or the given random matrix).
  void begin();
  void begin(const Matrix& omega);
  /// Dense blocks and leaf subtraction (level 1) or merge and coupling
  /// subtraction (higher levels).
  void form_local_samples(int level);
  bool level_converged(int level) const;
  /// Adaptive loop for one level; returns the number of rounds added.
  int refine_until_converged(int level);
  /// Replays all completed levels on fresh columns and appends them to the
  /// local samples of `level`.
  void append_samples(int level, const Matrix& omega_new, const Matrix& y_new);
  void skeletonize(int level);
  void generate_couplings(int level);
  ConstructionResult finish();

  const Matrix& local_samples(Index node) const { return yloc_[at(node)]; }
  const Matrix& local_omega(Index node) const { return omega_[at(node)]; }
  Index current_samples() const { return samples_; }
  double eps_abs() const { return eps_abs_; }
  const H2Matrix& partial() const { return result_; }

 private:
  static std::size_t at(Index i) { return static_cast<std::size_t>(i); }


  // Per-level transforms, shared by the first pass and the replay of new columns.
  void leaf_local(const Matrix& omega, const Matrix& y, std::vector<Matrix>& om,
                  std::vector<Matrix>& yl, bool timed);
  void advance(int level, const std::vector<Matrix>& om, const std::vector<Matrix>& yl,
               std::vector<Matrix>& om_next, std::vector<Matrix>& y_next, bool timed);
  void merge_subtract(int level, const std::vector<Matrix>& om_next,
                      const std::vector<Matrix>& y_next, std::vector<Matrix>& om,
                      std::vector<Matrix>& yl, bool timed);
  void generate_dense();
  Matrix draw_omega(std::uint64_t round);
  Matrix sample(const Matrix& omega, int level);
  bool node_converged(Index node) const;

  const Sampler& sampler_;
  const EntryEvaluator& evaluator_;
  const ClusterTree& tree_;
  const MatrixTree& mtree_;
  ConstructionConfig cfg_;
  CounterRng rng_;

  H2Matrix result_;
  ConstructionStats stats_;
  std::vector<bool> has_far_;
  std::vector<std::vector<Index>> local_index_;   // global indices of a node's sample rows
  std::vector<std::vector<Index>> local_skeleton_;  // J per node
  std::vector<Matrix> interpolation_;             // W per node
  std::vector<Matrix> omega_, yloc_;              // current level
  std::vector<Matrix> omega_next_, y_next_;       // after skeletonization
  Matrix omega0_, y0_;
  Index samples_ = 0;
  std::uint64_t round_ = 0;
  double eps_abs_ = 0;
  bool dense_done_ = false;
  std::vector<int> rounds_;  // per level
  double start_ms_ = 0;
};

/// Convenience wrapper around SketchConstructor::run().
ConstructionResult construct(const Sampler& sampler, const EntryEvaluator& evaluator,
                             const ClusterTree& tree, const MatrixTree& mtree,
                             const ConstructionConfig& cfg);

}  // namespace h2sketch
