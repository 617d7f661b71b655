#include "h2sketch/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "h2sketch/io.hpp"
#include "h2sketch/norm_estimate.hpp"
#include "h2sketch/random.hpp"

namespace h2sketch {

namespace {

// Integer m with m^dim == n, if any.
std::optional<Index> exact_root(Index n, int dim) {
  const auto guess = static_cast<Index>(std::llround(std::pow(static_cast<double>(n), 1.0 / dim)));
  for (Index m = std::max<Index>(1, guess - 1); m <= guess + 1; ++m) {
    Index p = 1;
    for (int k = 0; k < dim; ++k) p *= m;
    if (p == n) return m;
  }
  return std::nullopt;
}

std::shared_ptr<const Matrix> share(Matrix m) { return std::make_shared<const Matrix>(std::move(m)); }

}  // namespace

void RunConfig::validate() const {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1, 2 or 3");
  if (points == PointMode::grid && !exact_root(n, dim))
    throw std::invalid_argument("grid points need n to be a perfect power of dim (n = " +
                                std::to_string(n) + ", dim = " + std::to_string(dim) + ")");
  if (!(corr_length > 0) || !(wavenumber > 0))
    throw std::invalid_argument("kernel parameters must be positive");
  if (kernel == KernelKind::dense_file && dense_file.empty())
    throw std::invalid_argument("dense-file kernel needs --dense-file");
  if (dense_guard < 1) throw std::invalid_argument("dense guard must be positive");
  construction.validate();
}

KernelSpec RunConfig::kernel_spec() const {
  if (kernel == KernelKind::ie) return HelmholtzIE{wavenumber};
  return ExponentialCovariance{corr_length};
}

PointSet generate_points(Index n, int dim, PointMode mode, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (dim < 1 || dim > 3) throw std::invalid_argument("dim must be 1, 2 or 3");
  std::vector<double> coords(static_cast<std::size_t>(n * dim));
  if (mode == PointMode::grid) {
    const auto m = exact_root(n, dim);
    if (!m) throw std::invalid_argument("grid points need n to be a perfect power of dim");
    const double h = *m > 1 ? 1.0 / static_cast<double>(*m - 1) : 0.0;
    for (Index i = 0; i < n; ++i) {
      Index r = i;
      for (int k = 0; k < dim; ++k) {
        coords[static_cast<std::size_t>(i * dim + k)] = static_cast<double>(r % *m) * h;
        r /= *m;
      }
    }
  } else {
    const CounterRng rng(seed, 2);
    for (Index i = 0; i < n; ++i)
      for (int k = 0; k < dim; ++k)
        coords[static_cast<std::size_t>(i * dim + k)] =
            rng.uniform(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k));
  }
  return PointSet(dim, std::move(coords));
}

Problem make_problem(const RunConfig& cfg) {
  cfg.validate();
  Problem p;
  if (cfg.kernel == KernelKind::dense_file) {
    Matrix a = read_dense_file(cfg.dense_file);
    if (a.rows() != cfg.n)
      throw std::invalid_argument("dense file has n = " + std::to_string(a.rows()) +
                                  " but the run expects " + std::to_string(cfg.n));
    p.points = generate_points(cfg.n, cfg.dim, cfg.points, cfg.construction.seed);
    p.tree = build_cluster_tree(p.points, cfg.construction.leaf_size);
    p.mtree = build_matrix_tree(p.tree, cfg.construction.eta);
    p.dense = share(to_tree_order(a, p.tree.permutation()));
    p.sampler = std::make_unique<DenseMatrixSampler>(p.dense);
    p.evaluator = std::make_unique<DenseMatrixEvaluator>(p.dense);
    return p;
  }
  p.points = generate_points(cfg.n, cfg.dim, cfg.points, cfg.construction.seed);
  p.tree = build_cluster_tree(p.points, cfg.construction.leaf_size);
  p.mtree = build_matrix_tree(p.tree, cfg.construction.eta);
  const PointSet ordered = p.points.permuted(p.tree.permutation());
  p.sampler = std::make_unique<KernelSampler>(ordered, cfg.kernel_spec());
  p.evaluator = std::make_unique<KernelEvaluator>(ordered, cfg.kernel_spec());
  return p;
}

Matrix dense_oracle(const RunConfig& cfg, const Problem& p) {
  if (p.tree.point_count() > cfg.dense_guard)
    throw std::length_error("dense oracle: n = " + std::to_string(p.tree.point_count()) +
                            " exceeds guard " + std::to_string(cfg.dense_guard));
  if (p.dense) return *p.dense;
  return dense_kernel_matrix(p.points.permuted(p.tree.permutation()), cfg.kernel_spec());
}

VerifyReport verify_against(const H2Matrix& h, const Matrix& oracle, std::uint64_t seed) {
  if (oracle.rows() != h.size() || oracle.cols() != h.size())
    throw std::invalid_argument("oracle size does not match the H2 matrix");
  VerifyReport r;
  auto hp = std::shared_ptr<const H2Matrix>(std::shared_ptr<const H2Matrix>{}, &h);
  const H2Sampler hs(hp);
  const DenseMatrixSampler ds(std::shared_ptr<const Matrix>(std::shared_ptr<const Matrix>{}, &oracle));
  r.rel_error = estimate_rel_error(hs, ds, 10, seed);

  const CounterRng rng(seed, 3);
  const Matrix x = rng.gaussian_matrix(h.size(), 10, 0);
  const Matrix hx = matvec(h, x);
  const Matrix kx = oracle * x;
  for (Index j = 0; j < x.cols(); ++j) {
    const double base = kx.col(j).norm();
    const double diff = (hx.col(j) - kx.col(j)).norm();
    r.matvec_error = std::max(r.matvec_error, base > 0 ? diff / base : diff);
  }

  std::vector<Index> rows(100), cols(100);
  std::vector<BlockRequest> req;
  const auto n = static_cast<std::uint64_t>(h.size());
  for (std::size_t k = 0; k < 100; ++k) {
    rows[k] = static_cast<Index>(rng.uniform(1, k, 0) * static_cast<double>(n)) % h.size();
    cols[k] = static_cast<Index>(rng.uniform(1, k, 1) * static_cast<double>(n)) % h.size();
  }
  for (std::size_t k = 0; k < 100; ++k) req.push_back({{&rows[k], 1}, {&cols[k], 1}});
  const auto vals = extract_entries(h, req);
  for (std::size_t k = 0; k < 100; ++k)
    r.entry_error = std::max(r.entry_error, std::abs(vals[k](0, 0) - oracle(rows[k], cols[k])));
  r.memory = memory_report(h);
  return r;
}

VerifyReport run_verify(const RunConfig& cfg, std::shared_ptr<const H2Matrix>* built) {
  if (cfg.n > cfg.dense_guard)
    throw std::length_error("verify: n = " + std::to_string(cfg.n) + " exceeds the dense guard " +
                            std::to_string(cfg.dense_guard));
  Problem p = make_problem(cfg);
  std::shared_ptr<const H2Matrix> h;
  std::optional<ConstructionStats> stats;
  if (!cfg.load_h2.empty()) {
    h = std::make_shared<const H2Matrix>(load_h2_file(cfg.load_h2));
    if (h->size() != cfg.n) throw std::invalid_argument("saved matrix has a different size");
  } else {
    auto res = construct(*p.sampler, *p.evaluator, p.tree, p.mtree, cfg.construction);
    stats = std::move(res.stats);
    h = std::make_shared<const H2Matrix>(std::move(res.matrix));
  }
  // A loaded matrix carries its own tree; the oracle must follow its ordering.
  Matrix oracle;
  if (!cfg.load_h2.empty()) {
    Problem q;
    q.points = p.points;
    q.tree = h->tree();
    q.dense = p.dense ? share(to_tree_order(read_dense_file(cfg.dense_file), q.tree.permutation()))
                      : nullptr;
    oracle = dense_oracle(cfg, q);
  } else {
    oracle = dense_oracle(cfg, p);
  }
  VerifyReport r = verify_against(*h, oracle, cfg.construction.seed + 1);
  r.stats = std::move(stats);
  if (built) *built = h;
  return r;
}

UpdateReport run_update(const RunConfig& cfg, Index rank) {
  if (rank < 0) throw std::invalid_argument("update rank must be non-negative");
  if (cfg.n > cfg.dense_guard)
    throw std::length_error("update: n = " + std::to_string(cfg.n) + " exceeds the dense guard");
  Problem p = make_problem(cfg);
  UpdateReport r;
  auto base_res = construct(*p.sampler, *p.evaluator, p.tree, p.mtree, cfg.construction);
  r.base_stats = base_res.stats;
  auto base = std::make_shared<const H2Matrix>(std::move(base_res.matrix));

  // Scaled so that U U^T is comparable to the base matrix in norm.
  const double sigma = std::sqrt(r.base_stats.norm_estimate / static_cast<double>(cfg.n));
  LowRankUpdate up{CounterRng(cfg.construction.seed, 4).gaussian_matrix(cfg.n, rank, 0) * sigma};
  auto sampler = make_updated_sampler(base, up);
  auto evaluator = make_updated_evaluator(base, up);
  auto res = construct(*sampler, *evaluator, p.tree, p.mtree, cfg.construction);
  r.stats = res.stats;

  const Matrix uut = up.factor * up.factor.transpose();
  const Matrix oracle = to_dense(*base, cfg.dense_guard) + uut;
  r.rel_error = verify_against(res.matrix, oracle, cfg.construction.seed + 1).rel_error;
  const Matrix kernel_oracle = dense_oracle(cfg, p) + uut;
  r.rel_error_kernel = verify_against(res.matrix, kernel_oracle, cfg.construction.seed + 1).rel_error;

  Index kept = 0, total = 0;
  for (Index s = 1; s < p.tree.node_count(); ++s) {
    ++total;
    if (res.matrix.rank(s) >= base->rank(s)) ++kept;
  }
  r.rank_growth = total ? static_cast<double>(kept) / static_cast<double>(total) : 1.0;
  return r;
}

namespace {

BenchRow bench_one(const RunConfig& base_cfg, Index n, bool bootstrap) {
  RunConfig cfg = base_cfg;
  cfg.n = n;
  Problem p = make_problem(cfg);
  ConstructionResult res;
  if (bootstrap) {
    ConstructionConfig seed_cfg = cfg.construction;
    seed_cfg.adaptive = false;
    seed_cfg.representative_rank = 150;
    seed_cfg.oversampling = 10;
    seed_cfg.max_samples = std::max(seed_cfg.max_samples, seed_cfg.initial_samples());
    seed_cfg.norm_iterations = 3;
    auto seed = construct(*p.sampler, *p.evaluator, p.tree, p.mtree, seed_cfg);
    auto m = std::make_shared<const H2Matrix>(std::move(seed.matrix));
    ConstructionConfig timed = cfg.construction;
    timed.operator_norm = seed.stats.norm_estimate;
    res = construct(H2Sampler(m), H2EntryEvaluator(m), p.tree, p.mtree, timed);
  } else {
    res = construct(*p.sampler, *p.evaluator, p.tree, p.mtree, cfg.construction);
  }
  BenchRow row;
  row.n = n;
  row.time_total = res.stats.total_ms;
  row.times = res.stats.times_ms;
  row.memory = memory_report(res.matrix);
  row.samples = res.stats.total_samples;
  if (!res.stats.levels.empty()) {
    row.rank_min = res.stats.levels.front().rank_min;
    row.rank_max = res.stats.levels.front().rank_max;
    row.leaf_rank_min = row.rank_min;
    row.leaf_rank_max = row.rank_max;
    for (const auto& l : res.stats.levels) {
      row.rank_min = std::min(row.rank_min, l.rank_min);
      row.rank_max = std::max(row.rank_max, l.rank_max);
    }
  }
  row.c_sp = sparsity_constant(p.mtree);
  return row;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<BenchRow> run_bench(const RunConfig& cfg, const std::vector<Index>& n_list,
                                bool bootstrap) {
  std::vector<BenchRow> rows;
  if (n_list.empty()) return rows;
  bench_one(cfg, n_list.front(), bootstrap);  // warmup
  for (Index n : n_list) rows.push_back(bench_one(cfg, n, bootstrap));
  return rows;
}

const std::vector<std::string>& bench_csv_columns() {
  static const std::vector<std::string> cols = {
      "n",           "time_total",    "rand",          "sample",     "bsr_subtract",
      "convergence", "id",            "shrink",        "gen",        "misc",
      "mem_basis",   "mem_transfer",  "mem_coupling",  "mem_dense",  "mem_indices",
      "mem_total",   "samples",       "rank_min",      "rank_max",   "leaf_rank_min",
      "leaf_rank_max", "c_sp"};
  return cols;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  const auto& cols = bench_csv_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
  os << '\n';
  for (const auto& r : rows) {
    const auto& t = r.times;
    const auto& m = r.memory;
    os << r.n << ',' << fmt(r.time_total) << ',' << fmt(t.rand) << ',' << fmt(t.sample) << ','
       << fmt(t.bsr_subtract) << ',' << fmt(t.convergence) << ',' << fmt(t.id) << ','
       << fmt(t.shrink) << ',' << fmt(t.gen) << ',' << fmt(t.misc) << ',' << m.basis << ','
       << m.transfer << ',' << m.coupling << ',' << m.dense << ',' << m.indices << ','
       << m.total() << ',' << r.samples << ',' << r.rank_min << ',' << r.rank_max << ','
       << r.leaf_rank_min << ',' << r.leaf_rank_max << ',' << r.c_sp << '\n';
  }
}

std::vector<BenchRow> read_bench_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("bench csv: missing header");
  {
    std::string expect;
    const auto& cols = bench_csv_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) expect += (k ? "," : "") + cols[k];
    if (line != expect) throw std::runtime_error("bench csv: unexpected header");
  }
  std::vector<BenchRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != bench_csv_columns().size()) throw std::runtime_error("bench csv: bad row");
    auto d = [&](std::size_t k) { return std::stod(f[k]); };
    auto i = [&](std::size_t k) { return static_cast<Index>(std::stoll(f[k])); };
    auto z = [&](std::size_t k) { return static_cast<std::size_t>(std::stoull(f[k])); };
    BenchRow r;
    r.n = i(0);
    r.time_total = d(1);
    r.times = {d(2), d(3), d(4), d(5), d(6), d(7), d(8), d(9)};
    r.memory = {z(10), z(11), z(12), z(13), z(14)};
    if (z(15) != r.memory.total()) throw std::runtime_error("bench csv: memory total mismatch");
    r.samples = i(16);
    r.rank_min = i(17);
    r.rank_max = i(18);
    r.leaf_rank_min = i(19);
    r.leaf_rank_max = i(20);
    r.c_sp = i(21);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace h2sketch
