#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "h2sketch/construction.hpp"
#include "h2sketch/geometry.hpp"
#include "h2sketch/h2_matrix.hpp"
#include "h2sketch/kernels.hpp"

namespace h2sketch {

enum class KernelKind { cov, ie, dense_file };
enum class PointMode { grid, random };

struct RunConfig {
  KernelKind kernel = KernelKind::cov;
  Index n = 4096;
  int dim = 3;
  PointMode points = PointMode::grid;
  double corr_length = 0.2;
  double wavenumber = 3.0;
  ConstructionConfig construction;  ///< eta, leaf size, eps, sample block, adaptivity, seed
  std::string dense_file;           ///< matrix in original point order (kernel dense-file)
  std::string load_h2;              ///< verify a saved matrix instead of constructing
  Index dense_guard = dense_guard_default;

  /// Throws std::invalid_argument (grid needs a perfect dim-th power n).
  void validate() const;
  KernelSpec kernel_spec() const;
};

/// grid: regular lattice over [0,1]^dim including the endpoints, first
/// coordinate fastest. random: i.i.d. uniform from the counter-based generator.
PointSet generate_points(Index n, int dim, PointMode mode, std::uint64_t seed);

/// Points, trees and the operator of a run. For dense-file runs the points are
/// generated from the config and only provide the geometry of the partition.
struct Problem {
  PointSet points;  ///< original order
  ClusterTree tree;
  MatrixTree mtree;
  std::shared_ptr<const Matrix> dense;  ///< tree order; dense-file runs only
  std::unique_ptr<Sampler> sampler;
  std::unique_ptr<EntryEvaluator> evaluator;
};

Problem make_problem(const RunConfig& cfg);

/// Dense operator in tree order: the file matrix or the kernel matrix.
/// Throws std::length_error above the guard.
Matrix dense_oracle(const RunConfig& cfg, const Problem& p);

struct VerifyReport {
  double rel_error = 0;      ///< power method, ||H - K||_2 / ||K||_2
  double matvec_error = 0;   ///< max over 10 random vectors of ||Hx - Kx|| / ||Kx||
  double entry_error = 0;    ///< max |H(i,j) - K(i,j)| over 100 random entries
  std::optional<ConstructionStats> stats;  ///< empty when the matrix was loaded
  MemoryReport memory;
};

/// Compares a matrix against the dense oracle.
VerifyReport verify_against(const H2Matrix& h, const Matrix& oracle, std::uint64_t seed);

/// Constructs (or loads) and verifies; throws std::length_error when n is
/// above the dense guard.
VerifyReport run_verify(const RunConfig& cfg, std::shared_ptr<const H2Matrix>* built = nullptr);

struct UpdateReport {
  ConstructionStats base_stats;
  ConstructionStats stats;
  double rel_error = 0;         ///< against dense(base) + U U^T
  double rel_error_kernel = 0;  ///< against K + U U^T
  double rank_growth = 0;       ///< fraction of clusters whose rank did not drop
};

/// Base construction, random rank-p symmetric term, reconstruction of the sum.
UpdateReport run_update(const RunConfig& cfg, Index rank);

struct BenchRow {
  Index n = 0;
  double time_total = 0;  ///< ms
  PhaseTimes times;       ///< ms
  MemoryReport memory;
  Index samples = 0;
  Index rank_min = 0;
  Index rank_max = 0;
  Index leaf_rank_min = 0;
  Index leaf_rank_max = 0;
  Index c_sp = 0;
};

/// One row per n. With bootstrap set, each size is first compressed with the
/// on-the-fly kernel sampler (untimed) and the timed run recompresses that
/// matrix through its own matvec and entry extraction, which keeps the
/// sampler cost linear. The first size is run twice and the first run dropped.
std::vector<BenchRow> run_bench(const RunConfig& cfg, const std::vector<Index>& n_list,
                                bool bootstrap);

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_bench_csv(std::istream& is);
const std::vector<std::string>& bench_csv_columns();

}  // namespace h2sketch
