#include "h2sketch/construction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace h2sketch {

namespace {

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

// Adds the elapsed wall time to a phase counter on scope exit.
class PhaseTimer {
 public:
  PhaseTimer(double* acc) : acc_(acc), t0_(acc ? now_ms() : 0.0) {}
  ~PhaseTimer() {
    if (acc_) *acc_ += now_ms() - t0_;
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  double* acc_;
  double t0_;
};

Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0) return b;
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix vcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

Matrix select_rows(const Matrix& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = a.row(rows[i]);
  return out;
}

}  // namespace

void ConstructionConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("eps must be positive");
  if (sample_block < 1) throw std::invalid_argument("sample_block must be at least 1");
  if (oversampling < 0) throw std::invalid_argument("oversampling must be non-negative");
  if (representative_rank && *representative_rank < 1)
    throw std::invalid_argument("representative_rank must be at least 1");
  if (max_samples < initial_samples())
    throw std::invalid_argument("max_samples is below the initial sample count");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (leaf_size < 2) throw std::invalid_argument("leaf_size must be at least 2");
  if (norm_iterations < 1) throw std::invalid_argument("norm_iterations must be at least 1");
  if (operator_norm && (!(*operator_norm >= 0.0) || !std::isfinite(*operator_norm)))
    throw std::invalid_argument("operator_norm must be finite and non-negative");
}

Index ConstructionConfig::initial_samples() const {
  if (!adaptive && representative_rank) return *representative_rank + oversampling;
  return sample_block;
}

void subtract_far_contributions(Eigen::Ref<Matrix> y, std::span<const PartnerTerm> terms) {
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& t = terms[k];
    if (k > 0 && terms[k - 1].partner >= t.partner)
      throw std::invalid_argument("subtract_far_contributions: partners not ascending");
    if (t.block->rows() != y.rows() || t.block->cols() != t.omega->rows() ||
        t.omega->cols() != y.cols())
      throw std::invalid_argument("subtract_far_contributions: dimension mismatch at partner " +
                                  std::to_string(t.partner));
  }
  for (const auto& t : terms)
    if (t.block->size() > 0) y.noalias() -= *t.block * *t.omega;
}

NodeSkeleton skeletonize_node(const Matrix& yloc, const Matrix& omega, double tol_abs) {
  NodeSkeleton out;
  out.id = row_id(yloc, tol_abs);
  out.y_next = select_rows(yloc, out.id.skeleton);
  out.omega_next = out.id.interpolation.transpose() * omega;
  return out;
}

SketchConstructor::SketchConstructor(const Sampler& sampler, const EntryEvaluator& evaluator,
                                     const ClusterTree& tree, const MatrixTree& mtree,
                                     ConstructionConfig cfg)
    : sampler_(sampler),
      evaluator_(evaluator),
      tree_(tree),
      mtree_(mtree),
      cfg_(std::move(cfg)),
      rng_(cfg_.seed, 1) {
  cfg_.validate();
  if (sampler_.size() != tree_.point_count() || evaluator_.size() != tree_.point_count())
    throw std::invalid_argument("construction: operator size does not match the cluster tree");
  if (mtree_.level_count() != tree_.level_count())
    throw std::invalid_argument("construction: matrix tree does not match the cluster tree");

  result_ = H2Matrix(tree_, mtree_);
  const auto nodes = at(tree_.node_count());
  has_far_.assign(nodes, false);
  // Root first, so a node inherits its parent's flag.
  for (Index id = 0; id < tree_.node_count(); ++id) {
    bool f = !mtree_.far(id).empty();
    if (id > 0) f = f || has_far_[at(ClusterTree::parent(id))];
    has_far_[at(id)] = f;
  }
  local_index_.resize(nodes);
  for (Index id = tree_.level_begin(1); id < tree_.level_end(1); ++id) {
    auto idx = tree_.indices(id);
    local_index_[at(id)].assign(idx.begin(), idx.end());
  }
  local_skeleton_.resize(nodes);
  interpolation_.resize(nodes);
  omega_.resize(nodes);
  yloc_.resize(nodes);
  omega_next_.resize(nodes);
  y_next_.resize(nodes);
  rounds_.assign(static_cast<std::size_t>(tree_.level_count() + 1), 0);
}

Matrix SketchConstructor::draw_omega(std::uint64_t round) {
  PhaseTimer t(&stats_.times_ms.rand);
  const Index n = tree_.point_count();
  const Index d = round == 0 ? cfg_.initial_samples() : cfg_.sample_block;
  Matrix out(n, d);
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < n; ++i)
      out(i, j) = rng_.gaussian(round, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  return out;
}

Matrix SketchConstructor::sample(const Matrix& omega, int level) {
  PhaseTimer t(&stats_.times_ms.sample);
  Matrix y = sampler_.apply(omega);
  if (y.rows() != omega.rows() || y.cols() != omega.cols())
    throw ConstructionError("sampler returned a block of the wrong shape", level);
  if (!y.allFinite()) throw ConstructionError("sampler returned non-finite values", level);
  return y;
}

void SketchConstructor::begin() {
  start_ms_ = now_ms();
  {
    PhaseTimer t(&stats_.times_ms.sample);
    stats_.norm_estimate = cfg_.operator_norm
                               ? *cfg_.operator_norm
                               : estimate_operator_norm(sampler_, cfg_.norm_iterations, cfg_.seed);
  }
  eps_abs_ = cfg_.eps * stats_.norm_estimate;
  stats_.eps_abs = eps_abs_;
  omega0_ = draw_omega(0);
  round_ = 1;
  y0_ = sample(omega0_, 0);
  samples_ = omega0_.cols();
}

void SketchConstructor::begin(const Matrix& omega) {
  if (omega.rows() != tree_.point_count() || omega.cols() < 1)
    throw std::invalid_argument("construction: initial random matrix has the wrong shape");
  start_ms_ = now_ms();
  {
    PhaseTimer t(&stats_.times_ms.sample);
    stats_.norm_estimate = cfg_.operator_norm
                               ? *cfg_.operator_norm
                               : estimate_operator_norm(sampler_, cfg_.norm_iterations, cfg_.seed);
  }
  eps_abs_ = cfg_.eps * stats_.norm_estimate;
  stats_.eps_abs = eps_abs_;
  omega0_ = omega;
  round_ = 1;
  y0_ = sample(omega0_, 0);
  samples_ = omega0_.cols();
}

void SketchConstructor::generate_dense() {
  if (dense_done_) return;
  PhaseTimer t(&stats_.times_ms.gen);
  struct Slot {
    Index s;
    std::size_t k;
  };
  std::vector<BlockRequest> requests;
  std::vector<Slot> slots;
  for (Index s = tree_.level_begin(1); s < tree_.level_end(1); ++s) {
    const auto near = mtree_.near(s);
    for (std::size_t k = 0; k < near.size(); ++k) {
      if (near[k] < s) continue;
      requests.push_back({tree_.indices(s), tree_.indices(near[k])});
      slots.push_back({s, k});
    }
  }
  auto blocks = evaluator_.eval_blocks(requests);
  for (std::size_t q = 0; q < slots.size(); ++q) {
    const Index s = slots[q].s;
    const Index b = mtree_.near(s)[slots[q].k];
    if (b == s) {
      // Symmetrise the diagonal block from its upper triangle.
      Matrix& d = blocks[q];
      d.triangularView<Eigen::StrictlyLower>() = d.transpose().triangularView<Eigen::StrictlyLower>();
      result_.dense_[at(s)][slots[q].k] = std::move(d);
      continue;
    }
    const auto bn = mtree_.near(b);
    const auto k2 = static_cast<std::size_t>(std::lower_bound(bn.begin(), bn.end(), s) - bn.begin());
    result_.dense_[at(b)][k2] = blocks[q].transpose();
    result_.dense_[at(s)][slots[q].k] = std::move(blocks[q]);
  }
  dense_done_ = true;
}

void SketchConstructor::leaf_local(const Matrix& omega, const Matrix& y, std::vector<Matrix>& om,
                                   std::vector<Matrix>& yl, bool timed) {
  const Index lb = tree_.level_begin(1), le = tree_.level_end(1);
  {
    PhaseTimer t(timed ? &stats_.times_ms.shrink : nullptr);
#pragma omp parallel for schedule(static)
    for (Index s = lb; s < le; ++s) {
      const auto& nd = tree_.node(s);
      om[at(s)] = omega.middleRows(nd.begin, nd.size());
      yl[at(s)] = y.middleRows(nd.begin, nd.size());
    }
  }
  PhaseTimer t(timed ? &stats_.times_ms.bsr_subtract : nullptr);
#pragma omp parallel for schedule(dynamic)
  for (Index s = lb; s < le; ++s) {
    const auto near = mtree_.near(s);
    const auto& blocks = result_.dense_[at(s)];
    Matrix& ys = yl[at(s)];
    for (std::size_t k = 0; k < near.size(); ++k) ys.noalias() -= blocks[k] * om[at(near[k])];
  }
}

void SketchConstructor::advance(int level, const std::vector<Matrix>& om,
                                const std::vector<Matrix>& yl, std::vector<Matrix>& om_next,
                                std::vector<Matrix>& y_next, bool timed) {
  PhaseTimer t(timed ? &stats_.times_ms.shrink : nullptr);
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
#pragma omp parallel for schedule(dynamic)
  for (Index s = lb; s < le; ++s) {
    y_next[at(s)] = select_rows(yl[at(s)], local_skeleton_[at(s)]);
    om_next[at(s)] = interpolation_[at(s)].transpose() * om[at(s)];
  }
}

void SketchConstructor::merge_subtract(int level, const std::vector<Matrix>& om_next,
                                       const std::vector<Matrix>& y_next, std::vector<Matrix>& om,
                                       std::vector<Matrix>& yl, bool timed) {
  PhaseTimer t(timed ? &stats_.times_ms.bsr_subtract : nullptr);
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
#pragma omp parallel for schedule(dynamic)
  for (Index s = lb; s < le; ++s) {
    const Index c1 = ClusterTree::left_child(s), c2 = ClusterTree::right_child(s);
    om[at(s)] = vcat(om_next[at(c1)], om_next[at(c2)]);
    Matrix y = vcat(y_next[at(c1)], y_next[at(c2)]);
    Index row = 0;
    for (Index c : {c1, c2}) {
      const Index r = y_next[at(c)].rows();
      const auto far = mtree_.far(c);
      const auto& blocks = result_.couplings_[at(c)];
      for (std::size_t k = 0; k < far.size(); ++k)
        if (blocks[k].size() > 0) y.middleRows(row, r).noalias() -= blocks[k] * om_next[at(far[k])];
      row += r;
    }
    yl[at(s)] = std::move(y);
  }
}

void SketchConstructor::form_local_samples(int level) {
  if (level < 1 || level >= tree_.level_count())
    throw std::out_of_range("form_local_samples: level " + std::to_string(level));
  if (level == 1) {
    generate_dense();
    leaf_local(omega0_, y0_, omega_, yloc_, true);
    omega0_ = Matrix();
    y0_ = Matrix();
    return;
  }
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
  for (Index s = lb; s < le; ++s) {
    const auto& a = result_.skeletons_[at(ClusterTree::left_child(s))];
    const auto& b = result_.skeletons_[at(ClusterTree::right_child(s))];
    auto& li = local_index_[at(s)];
    li.assign(a.begin(), a.end());
    li.insert(li.end(), b.begin(), b.end());
  }
  merge_subtract(level, omega_next_, y_next_, omega_, yloc_, true);
  for (Index c = tree_.level_begin(level - 1); c < tree_.level_end(level - 1); ++c) {
    omega_next_[at(c)] = Matrix();
    y_next_[at(c)] = Matrix();
  }
}

bool SketchConstructor::node_converged(Index node) const {
  if (!has_far_[at(node)] || eps_abs_ == 0.0) return true;
  const Matrix& y = yloc_[at(node)];
  // With no more columns than rows the block cannot expose a rank deficiency.
  if (y.rows() <= y.cols()) return true;
  return is_converged(y, eps_abs_);
}

bool SketchConstructor::level_converged(int level) const {
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
  bool ok = true;
#pragma omp parallel for schedule(dynamic) reduction(&& : ok)
  for (Index s = lb; s < le; ++s) ok = ok && node_converged(s);
  return ok;
}

int SketchConstructor::refine_until_converged(int level) {
  int rounds = 0;
  for (;;) {
    bool ok;
    {
      PhaseTimer t(&stats_.times_ms.convergence);
      ok = level_converged(level);
    }
    if (ok) break;
    if (samples_ + cfg_.sample_block > cfg_.max_samples)
      throw ConstructionError("level " + std::to_string(level) + " did not converge within " +
                                  std::to_string(cfg_.max_samples) + " samples",
                              level);
    Matrix om = draw_omega(round_++);
    Matrix y = sample(om, level);
    append_samples(level, om, y);
    ++rounds;
  }
  rounds_[static_cast<std::size_t>(level)] += rounds;
  return rounds;
}

void SketchConstructor::append_samples(int level, const Matrix& omega_new, const Matrix& y_new) {
  if (omega_new.rows() != tree_.point_count() || y_new.rows() != omega_new.rows() ||
      y_new.cols() != omega_new.cols())
    throw std::invalid_argument("append_samples: shape mismatch");
  const auto nodes = at(tree_.node_count());
  std::vector<Matrix> om(nodes), yl(nodes), omn(nodes), yn(nodes);
  leaf_local(omega_new, y_new, om, yl, true);
  for (int m = 1; m < level; ++m) {
    advance(m, om, yl, omn, yn, true);
    merge_subtract(m + 1, omn, yn, om, yl, true);
  }
  PhaseTimer t(&stats_.times_ms.shrink);
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
#pragma omp parallel for schedule(static)
  for (Index s = lb; s < le; ++s) {
    omega_[at(s)] = hcat(omega_[at(s)], om[at(s)]);
    yloc_[at(s)] = hcat(yloc_[at(s)], yl[at(s)]);
  }
  samples_ += omega_new.cols();
}

void SketchConstructor::skeletonize(int level) {
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
  {
    PhaseTimer t(&stats_.times_ms.id);
#pragma omp parallel for schedule(dynamic)
    for (Index s = lb; s < le; ++s) {
      const Matrix& y = yloc_[at(s)];
      if (!has_far_[at(s)]) {
        local_skeleton_[at(s)].clear();
        interpolation_[at(s)] = Matrix::Zero(y.rows(), 0);
        continue;
      }
      IDResult id = row_id(y, eps_abs_);
      local_skeleton_[at(s)] = std::move(id.skeleton);
      interpolation_[at(s)] = std::move(id.interpolation);
    }
  }
  for (Index s = lb; s < le; ++s) {
    const auto& li = local_index_[at(s)];
    auto& sk = result_.skeletons_[at(s)];
    sk.clear();
    for (Index j : local_skeleton_[at(s)]) sk.push_back(li[at(j)]);
    const Matrix& w = interpolation_[at(s)];
    if (level == 1) {
      result_.leaf_bases_[at(s)] = w;
    } else {
      const Index c1 = ClusterTree::left_child(s), c2 = ClusterTree::right_child(s);
      const Index r1 = result_.rank(c1);
      result_.transfers_[at(c1)] = w.topRows(r1);
      result_.transfers_[at(c2)] = w.bottomRows(w.rows() - r1);
    }
  }
  advance(level, omega_, yloc_, omega_next_, y_next_, true);

  LevelStats ls;
  ls.level = level;
  ls.rank_min = result_.rank(lb);
  ls.rank_max = ls.rank_min;
  for (Index s = lb; s < le; ++s) {
    ls.rank_min = std::min(ls.rank_min, result_.rank(s));
    ls.rank_max = std::max(ls.rank_max, result_.rank(s));
  }
  ls.rounds = rounds_[static_cast<std::size_t>(level)];
  ls.samples = samples_;
  stats_.levels.push_back(ls);

  for (Index s = lb; s < le; ++s) {
    omega_[at(s)] = Matrix();
    yloc_[at(s)] = Matrix();
  }
}

void SketchConstructor::generate_couplings(int level) {
  PhaseTimer t(&stats_.times_ms.gen);
  struct Slot {
    Index s;
    std::size_t k;
  };
  std::vector<BlockRequest> requests;
  std::vector<Slot> slots;
  const Index lb = tree_.level_begin(level), le = tree_.level_end(level);
  for (Index s = lb; s < le; ++s) {
    const auto far = mtree_.far(s);
    for (std::size_t k = 0; k < far.size(); ++k) {
      if (far[k] < s) continue;
      requests.push_back({result_.skeletons_[at(s)], result_.skeletons_[at(far[k])]});
      slots.push_back({s, k});
    }
  }
  auto blocks = evaluator_.eval_blocks(requests);
  for (std::size_t q = 0; q < slots.size(); ++q) {
    const Index s = slots[q].s;
    const Index b = mtree_.far(s)[slots[q].k];
    const auto bf = mtree_.far(b);
    const auto k2 = static_cast<std::size_t>(std::lower_bound(bf.begin(), bf.end(), s) - bf.begin());
    result_.couplings_[at(b)][k2] = blocks[q].transpose();
    result_.couplings_[at(s)][slots[q].k] = std::move(blocks[q]);
  }
}

ConstructionResult SketchConstructor::finish() {
  stats_.total_samples = samples_;
  stats_.total_ms = now_ms() - start_ms_;
  auto& tm = stats_.times_ms;
  tm.misc = 0.0;
  tm.misc = std::max(0.0, stats_.total_ms - tm.sum());
  return {std::move(result_), std::move(stats_)};
}

ConstructionResult SketchConstructor::run() {
  begin();
  generate_dense();
  for (int level = 1; level < tree_.level_count(); ++level) {
    form_local_samples(level);
    if (cfg_.adaptive) refine_until_converged(level);
    skeletonize(level);
    generate_couplings(level);
  }
  return finish();
}

ConstructionResult construct(const Sampler& sampler, const EntryEvaluator& evaluator,
                             const ClusterTree& tree, const MatrixTree& mtree,
                             const ConstructionConfig& cfg) {
  SketchConstructor c(sampler, evaluator, tree, mtree, cfg);
  return c.run();
}

}  // namespace h2sketch
