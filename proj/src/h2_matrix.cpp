#include "h2sketch/h2_matrix.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace h2sketch {

namespace {

// Position of t in a sorted partner list, or -1.
Index find_partner(std::span<const Index> partners, Index t) {
  auto it = std::lower_bound(partners.begin(), partners.end(), t);
  if (it == partners.end() || *it != t) return -1;
  return static_cast<Index>(it - partners.begin());
}

}  // namespace

H2Matrix::H2Matrix(ClusterTree tree, MatrixTree mtree)
    : tree_(std::move(tree)), mtree_(std::move(mtree)) {
  const auto nodes = static_cast<std::size_t>(tree_.node_count());
  skeletons_.resize(nodes);
  leaf_bases_.resize(nodes);
  transfers_.resize(nodes);
  couplings_.resize(nodes);
  dense_.resize(nodes);
  for (Index id = 0; id < tree_.node_count(); ++id) {
    const auto& nd = tree_.node(id);
    if (nd.level == 1) {
      leaf_bases_[idx(id)] = Matrix::Zero(nd.size(), 0);
      for (Index b : mtree_.near(id))
        dense_[idx(id)].push_back(Matrix::Zero(nd.size(), tree_.node(b).size()));
    }
    if (id != 0) transfers_[idx(id)] = Matrix::Zero(0, 0);
    couplings_[idx(id)].assign(mtree_.far(id).size(), Matrix::Zero(0, 0));
  }
}

const Matrix* H2Matrix::coupling(Index s, Index t) const {
  const Index k = find_partner(mtree_.far(s), t);
  return k < 0 ? nullptr : &couplings_[idx(s)][static_cast<std::size_t>(k)];
}

const Matrix* H2Matrix::dense_block(Index s, Index t) const {
  const Index k = find_partner(mtree_.near(s), t);
  return k < 0 ? nullptr : &dense_[idx(s)][static_cast<std::size_t>(k)];
}

Matrix matvec(const H2Matrix& m, const Matrix& x) {
  const auto& tree = m.tree();
  const auto& mt = m.matrix_tree();
  if (x.rows() != m.size())
    throw std::invalid_argument("matvec: input has " + std::to_string(x.rows()) +
                                " rows, matrix has " + std::to_string(m.size()));
  const Index d = x.cols();
  const int top = m.top_level();
  std::vector<Matrix> xhat(static_cast<std::size_t>(tree.node_count()));
  std::vector<Matrix> yhat(xhat.size());
  auto at = [](std::vector<Matrix>& v, Index i) -> Matrix& { return v[static_cast<std::size_t>(i)]; };

  // Upward pass.
  if (top >= 1) {
#pragma omp parallel for schedule(static)
    for (Index id = tree.level_begin(1); id < tree.level_end(1); ++id) {
      const auto& nd = tree.node(id);
      at(xhat, id).noalias() = m.leaf_basis(id).transpose() * x.middleRows(nd.begin, nd.size());
    }
  }
  for (int level = 2; level <= top; ++level) {
#pragma omp parallel for schedule(static)
    for (Index id = tree.level_begin(level); id < tree.level_end(level); ++id) {
      const Index c1 = ClusterTree::left_child(id);
      const Index c2 = ClusterTree::right_child(id);
      Matrix& xh = at(xhat, id);
      xh.noalias() = m.transfer(c1).transpose() * at(xhat, c1);
      xh.noalias() += m.transfer(c2).transpose() * at(xhat, c2);
    }
  }

  // Couplings, partners in ascending order.
  for (int level = 1; level <= top; ++level) {
#pragma omp parallel for schedule(static)
    for (Index id = tree.level_begin(level); id < tree.level_end(level); ++id) {
      Matrix& yh = at(yhat, id);
      yh = Matrix::Zero(m.rank(id), d);
      const auto partners = mt.far(id);
      const auto blocks = m.couplings(id);
      for (std::size_t k = 0; k < partners.size(); ++k)
        yh.noalias() += blocks[k] * at(xhat, partners[k]);
    }
  }

  // Downward pass.
  for (int level = top; level >= 2; --level) {
#pragma omp parallel for schedule(static)
    for (Index id = tree.level_begin(level); id < tree.level_end(level); ++id) {
      for (Index c : {ClusterTree::left_child(id), ClusterTree::right_child(id)})
        at(yhat, c).noalias() += m.transfer(c) * at(yhat, id);
    }
  }

  Matrix y(m.size(), d);
#pragma omp parallel for schedule(static)
  for (Index id = tree.level_begin(1); id < tree.level_end(1); ++id) {
    const auto& nd = tree.node(id);
    auto rows = y.middleRows(nd.begin, nd.size());
    if (top >= 1)
      rows.noalias() = m.leaf_basis(id) * at(yhat, id);
    else
      rows.setZero();
    const auto partners = mt.near(id);
    const auto blocks = m.dense_blocks(id);
    for (std::size_t k = 0; k < partners.size(); ++k) {
      const auto& nb = tree.node(partners[k]);
      rows.noalias() += blocks[k] * x.middleRows(nb.begin, nb.size());
    }
  }
  return y;
}

Matrix expand_basis(const H2Matrix& m, Index node) {
  const auto& tree = m.tree();
  if (node < 0 || node >= tree.node_count()) throw std::out_of_range("expand_basis: bad node");
  if (tree.is_leaf(node)) return m.leaf_basis(node);
  const Index c1 = ClusterTree::left_child(node);
  const Index c2 = ClusterTree::right_child(node);
  const Matrix x1 = expand_basis(m, c1);
  const Matrix x2 = expand_basis(m, c2);
  Matrix out(x1.rows() + x2.rows(), m.rank(node));
  out.topRows(x1.rows()).noalias() = x1 * m.transfer(c1);
  out.bottomRows(x2.rows()).noalias() = x2 * m.transfer(c2);
  return out;
}

namespace {

struct LeafHit {
  int level = 0;
  Index s = 0;
  Index t = 0;
  bool dense = false;
};

LeafHit locate(const H2Matrix& m, Index leaf_a, Index leaf_b) {
  const auto& tree = m.tree();
  const auto& mt = m.matrix_tree();
  Index s = leaf_a;
  Index t = leaf_b;
  for (int level = 1; level <= tree.level_count(); ++level) {
    if (level == 1 && find_partner(mt.near(s), t) >= 0) return {level, s, t, true};
    if (find_partner(mt.far(s), t) >= 0) return {level, s, t, false};
    s = ClusterTree::parent(s);
    t = ClusterTree::parent(t);
  }
  throw std::logic_error("matrix tree does not cover a leaf pair");
}

// Positions of a request's indices grouped by leaf cluster.
using LeafGroups = std::map<Index, std::vector<Index>>;

LeafGroups group_by_leaf(const ClusterTree& tree, std::span<const Index> list) {
  LeafGroups groups;
  for (std::size_t p = 0; p < list.size(); ++p)
    groups[tree.leaf_of(list[p])].push_back(static_cast<Index>(p));
  return groups;
}

}  // namespace

std::vector<Matrix> extract_entries(const H2Matrix& m, std::span<const BlockRequest> requests) {
  const auto& tree = m.tree();
  const Index n = m.size();
  for (std::size_t r = 0; r < requests.size(); ++r)
    for (auto list : {requests[r].rows, requests[r].cols})
      for (Index i : list)
        if (i < 0 || i >= n)
          throw std::out_of_range("extract_entries: request " + std::to_string(r) + " index " +
                                  std::to_string(i) + " out of range");

  struct Plan {
    LeafGroups rows, cols;
    std::vector<LeafHit> hits;  // row-group major
  };
  std::vector<Plan> plans(requests.size());
  // index -> highest level whose basis row is needed
  std::map<Index, int> needed;
  for (std::size_t r = 0; r < requests.size(); ++r) {
    Plan& p = plans[r];
    p.rows = group_by_leaf(tree, requests[r].rows);
    p.cols = group_by_leaf(tree, requests[r].cols);
    for (const auto& [la, pa] : p.rows)
      for (const auto& [lb, pb] : p.cols) {
        const LeafHit hit = locate(m, la, lb);
        p.hits.push_back(hit);
        if (hit.dense) continue;
        for (Index q : pa) {
          int& lv = needed[requests[r].rows[static_cast<std::size_t>(q)]];
          lv = std::max(lv, hit.level);
        }
        for (Index q : pb) {
          int& lv = needed[requests[r].cols[static_cast<std::size_t>(q)]];
          lv = std::max(lv, hit.level);
        }
      }
  }

  // Basis rows per index, propagated from the leaf through the transfers.
  std::vector<Index> keys;
  std::vector<int> key_levels;
  for (const auto& [i, lv] : needed) {
    keys.push_back(i);
    key_levels.push_back(lv);
  }
  std::vector<std::vector<Eigen::RowVectorXd>> basis_rows(keys.size());
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const Index i = keys[k];
    Index node = tree.leaf_of(i);
    auto& chain = basis_rows[k];
    chain.push_back(m.leaf_basis(node).row(i - tree.node(node).begin));
    for (int level = 2; level <= key_levels[k]; ++level) {
      chain.push_back(chain.back() * m.transfer(node));
      node = ClusterTree::parent(node);
    }
  }
  auto basis_row = [&](Index i, int level) -> const Eigen::RowVectorXd& {
    const auto k = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), i) - keys.begin());
    return basis_rows[k][static_cast<std::size_t>(level - 1)];
  };

  std::vector<Matrix> out(requests.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t r = 0; r < requests.size(); ++r) {
    const auto& req = requests[r];
    const Plan& p = plans[r];
    Matrix& block = out[r];
    block.resize(static_cast<Index>(req.rows.size()), static_cast<Index>(req.cols.size()));
    std::size_t h = 0;
    for (const auto& [la, pa] : p.rows)
      for (const auto& [lb, pb] : p.cols) {
        const LeafHit& hit = p.hits[h++];
        if (hit.dense) {
          const Matrix& d = *m.dense_block(hit.s, hit.t);
          const Index sb = tree.node(hit.s).begin;
          const Index tb = tree.node(hit.t).begin;
          for (Index qb : pb)
            for (Index qa : pa)
              block(qa, qb) = d(req.rows[static_cast<std::size_t>(qa)] - sb,
                                req.cols[static_cast<std::size_t>(qb)] - tb);
          continue;
        }
        const Matrix& b = *m.coupling(hit.s, hit.t);
        Matrix left(static_cast<Index>(pa.size()), b.rows());
        Matrix right(static_cast<Index>(pb.size()), b.cols());
        for (std::size_t q = 0; q < pa.size(); ++q)
          left.row(static_cast<Index>(q)) = basis_row(req.rows[static_cast<std::size_t>(pa[q])], hit.level);
        for (std::size_t q = 0; q < pb.size(); ++q)
          right.row(static_cast<Index>(q)) = basis_row(req.cols[static_cast<std::size_t>(pb[q])], hit.level);
        const Matrix vals = left * b * right.transpose();
        for (std::size_t qb = 0; qb < pb.size(); ++qb)
          for (std::size_t qa = 0; qa < pa.size(); ++qa)
            block(pa[qa], pb[qb]) = vals(static_cast<Index>(qa), static_cast<Index>(qb));
      }
  }
  return out;
}

Matrix to_dense(const H2Matrix& m, Index guard) {
  const Index n = m.size();
  if (n > guard)
    throw std::length_error("to_dense: N = " + std::to_string(n) + " exceeds guard " +
                            std::to_string(guard));
  const auto& tree = m.tree();
  const auto& mt = m.matrix_tree();
  std::vector<Matrix> expanded(static_cast<std::size_t>(tree.node_count()));
  for (int level = 1; level <= m.top_level(); ++level)
    for (Index id = tree.level_begin(level); id < tree.level_end(level); ++id) {
      if (level == 1) {
        expanded[static_cast<std::size_t>(id)] = m.leaf_basis(id);
        continue;
      }
      const auto& x1 = expanded[static_cast<std::size_t>(ClusterTree::left_child(id))];
      const auto& x2 = expanded[static_cast<std::size_t>(ClusterTree::right_child(id))];
      Matrix& out = expanded[static_cast<std::size_t>(id)];
      out.resize(x1.rows() + x2.rows(), m.rank(id));
      out.topRows(x1.rows()).noalias() = x1 * m.transfer(ClusterTree::left_child(id));
      out.bottomRows(x2.rows()).noalias() = x2 * m.transfer(ClusterTree::right_child(id));
    }

  Matrix k = Matrix::Zero(n, n);
  for (Index id = 0; id < tree.node_count(); ++id) {
    const auto& s = tree.node(id);
    const auto far = mt.far(id);
    const auto couplings = m.couplings(id);
    for (std::size_t q = 0; q < far.size(); ++q) {
      const auto& t = tree.node(far[q]);
      k.block(s.begin, t.begin, s.size(), t.size()).noalias() =
          expanded[static_cast<std::size_t>(id)] * couplings[q] *
          expanded[static_cast<std::size_t>(far[q])].transpose();
    }
    if (s.level != 1) continue;
    const auto near = mt.near(id);
    const auto dense = m.dense_blocks(id);
    for (std::size_t q = 0; q < near.size(); ++q) {
      const auto& t = tree.node(near[q]);
      k.block(s.begin, t.begin, s.size(), t.size()) = dense[q];
    }
  }
  return k;
}

MemoryReport memory_report(const H2Matrix& m) {
  constexpr std::size_t word = sizeof(double);
  constexpr std::size_t index_word = sizeof(std::int64_t);
  const auto& tree = m.tree();
  MemoryReport rep;
  for (Index id = 0; id < tree.node_count(); ++id) {
    if (tree.is_leaf(id)) {
      rep.basis += static_cast<std::size_t>(m.leaf_basis(id).size()) * word;
      for (const auto& d : m.dense_blocks(id)) rep.dense += static_cast<std::size_t>(d.size()) * word;
    }
    if (id != 0) rep.transfer += static_cast<std::size_t>(m.transfer(id).size()) * word;
    for (const auto& b : m.couplings(id)) rep.coupling += static_cast<std::size_t>(b.size()) * word;
    rep.indices += m.skeleton(id).size() * index_word;
  }
  return rep;
}

void H2EntryEvaluator::eval_block(std::span<const Index> rows, std::span<const Index> cols,
                                  Eigen::Ref<Matrix> out) const {
  const BlockRequest req{rows, cols};
  out = extract_entries(*m_, std::span<const BlockRequest>(&req, 1)).front();
}

std::vector<Matrix> H2EntryEvaluator::eval_blocks(std::span<const BlockRequest> requests) const {
  return extract_entries(*m_, requests);
}

namespace {

class UpdatedSampler final : public Sampler {
 public:
  UpdatedSampler(std::shared_ptr<const H2Matrix> m, Matrix factor)
      : m_(std::move(m)), factor_(std::move(factor)) {}
  Index size() const override { return m_->size(); }
  Matrix apply(const Matrix& omega) const override {
    Matrix y = matvec(*m_, omega);
    if (factor_.cols() > 0) y.noalias() += factor_ * (factor_.transpose() * omega);
    return y;
  }

 private:
  std::shared_ptr<const H2Matrix> m_;
  Matrix factor_;
};

class UpdatedEvaluator final : public EntryEvaluator {
 public:
  UpdatedEvaluator(std::shared_ptr<const H2Matrix> m, Matrix factor)
      : m_(std::move(m)), factor_(std::move(factor)) {}
  Index size() const override { return m_->size(); }

  void eval_block(std::span<const Index> rows, std::span<const Index> cols,
                  Eigen::Ref<Matrix> out) const override {
    const BlockRequest req{rows, cols};
    out = extract_entries(*m_, std::span<const BlockRequest>(&req, 1)).front();
    add_low_rank(rows, cols, out);
  }

  std::vector<Matrix> eval_blocks(std::span<const BlockRequest> requests) const override {
    auto blocks = extract_entries(*m_, requests);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t r = 0; r < requests.size(); ++r)
      add_low_rank(requests[r].rows, requests[r].cols, blocks[r]);
    return blocks;
  }

 private:
  void add_low_rank(std::span<const Index> rows, std::span<const Index> cols,
                    Eigen::Ref<Matrix> out) const {
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < rows.size(); ++i)
        out(static_cast<Index>(i), static_cast<Index>(j)) +=
            factor_.row(rows[i]).dot(factor_.row(cols[j]));
  }

  std::shared_ptr<const H2Matrix> m_;
  Matrix factor_;
};

void check_update(const H2Matrix& m, const LowRankUpdate& up) {
  if (up.factor.rows() != m.size())
    throw std::invalid_argument("low-rank factor has " + std::to_string(up.factor.rows()) +
                                " rows, matrix has " + std::to_string(m.size()));
  if (!up.factor.allFinite()) throw std::invalid_argument("low-rank factor is not finite");
}

}  // namespace

std::unique_ptr<Sampler> make_updated_sampler(std::shared_ptr<const H2Matrix> m,
                                              const LowRankUpdate& up) {
  check_update(*m, up);
  return std::make_unique<UpdatedSampler>(std::move(m), up.factor);
}

std::unique_ptr<EntryEvaluator> make_updated_evaluator(std::shared_ptr<const H2Matrix> m,
                                                       const LowRankUpdate& up) {
  check_update(*m, up);
  return std::make_unique<UpdatedEvaluator>(std::move(m), up.factor);
}

}  // namespace h2sketch
