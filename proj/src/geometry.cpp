#include "h2sketch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace h2sketch {

PointSet::PointSet(int dim_, std::vector<double> coords_) : dim(dim_), coords(std::move(coords_)) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("point dimension must be 1, 2 or 3");
  if (coords.size() % static_cast<std::size_t>(dim) != 0)
    throw std::invalid_argument("coordinate count is not a multiple of the dimension");
}

PointSet PointSet::permuted(std::span<const Index> order) const {
  std::vector<double> out(order.size() * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto p = point(order[i]);
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(i) * dim);
  }
  return PointSet(dim, std::move(out));
}

double BoundingBox::diagonal() const {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  return std::sqrt(s);
}

double BoundingBox::distance(const BoundingBox& other) const {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double gap = std::max({0.0, other.lo[k] - hi[k], lo[k] - other.hi[k]});
    s += gap * gap;
  }
  return std::sqrt(s);
}

bool BoundingBox::contains(std::span<const double> x) const {
  for (int k = 0; k < dim; ++k)
    if (x[k] < lo[k] || x[k] > hi[k]) return false;
  return true;
}

ClusterTree::ClusterTree(std::vector<ClusterNode> nodes, std::vector<Index> permutation,
                         Index leaf_size, int level_count)
    : nodes_(std::move(nodes)),
      permutation_(std::move(permutation)),
      inverse_(permutation_.size()),
      iota_(permutation_.size()),
      leaf_size_(leaf_size),
      level_count_(level_count) {
  for (std::size_t i = 0; i < permutation_.size(); ++i)
    inverse_[static_cast<std::size_t>(permutation_[i])] = static_cast<Index>(i);
  std::iota(iota_.begin(), iota_.end(), Index{0});
}

std::span<const Index> ClusterTree::indices(Index id) const {
  const auto& nd = node(id);
  return std::span<const Index>(iota_).subspan(static_cast<std::size_t>(nd.begin),
                                               static_cast<std::size_t>(nd.size()));
}

Index ClusterTree::leaf_of(Index tree_index) const {
  if (tree_index < 0 || tree_index >= point_count())
    throw std::out_of_range("tree index " + std::to_string(tree_index) + " out of range");
  Index id = 0;
  while (!is_leaf(id)) {
    const Index left = left_child(id);
    id = tree_index < node(left).end ? left : right_child(id);
  }
  return id;
}

Index ClusterTree::ancestor(Index id, int level) const {
  while (node(id).level < level) id = parent(id);
  return id;
}

namespace {

BoundingBox box_of(const PointSet& points, std::span<const Index> members) {
  BoundingBox box;
  box.dim = points.dim;
  for (int k = 0; k < points.dim; ++k) {
    box.lo[k] = std::numeric_limits<double>::infinity();
    box.hi[k] = -std::numeric_limits<double>::infinity();
  }
  for (Index i : members) {
    auto p = points.point(i);
    for (int k = 0; k < points.dim; ++k) {
      box.lo[k] = std::min(box.lo[k], p[k]);
      box.hi[k] = std::max(box.hi[k], p[k]);
    }
  }
  return box;
}

struct TreeBuilder {
  const PointSet& points;
  std::vector<Index>& perm;
  std::vector<ClusterNode>& nodes;
  int level_count;

  void build(Index id, Index begin, Index end, int level) {
    std::span<Index> members(perm.data() + begin, static_cast<std::size_t>(end - begin));
    ClusterNode& nd = nodes[static_cast<std::size_t>(id)];
    nd.begin = begin;
    nd.end = end;
    nd.level = level;
    nd.box = box_of(points, members);
    if (level == 1) return;

    int axis = 0;
    for (int k = 1; k < points.dim; ++k)
      if (nd.box.hi[k] - nd.box.lo[k] > nd.box.hi[axis] - nd.box.lo[axis]) axis = k;

    const Index lower = (end - begin + 1) / 2;
    const int dim = points.dim;
    const auto& c = points.coords;
    // Ties on the coordinate fall back to the original index so the split is
    // a strict total order and the tree is reproducible.
    std::nth_element(members.begin(), members.begin() + lower, members.end(),
                     [&](Index a, Index b) {
                       const double ca = c[static_cast<std::size_t>(a * dim + axis)];
                       const double cb = c[static_cast<std::size_t>(b * dim + axis)];
                       return ca < cb || (ca == cb && a < b);
                     });
    build(ClusterTree::left_child(id), begin, begin + lower, level - 1);
    build(ClusterTree::right_child(id), begin + lower, end, level - 1);
  }
};

}  // namespace

ClusterTree build_cluster_tree(const PointSet& points, Index leaf_size) {
  if (leaf_size < 2) throw std::invalid_argument("leaf_size must be at least 2");
  const Index n = points.size();
  if (n < 1) throw std::invalid_argument("point set is empty");
  for (double x : points.coords)
    if (!std::isfinite(x)) throw std::invalid_argument("point coordinates must be finite");

  int depth = 0;
  while ((n + (Index{1} << depth) - 1) >> depth > leaf_size) ++depth;
  const int level_count = depth + 1;

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::vector<ClusterNode> nodes(static_cast<std::size_t>((Index{1} << level_count) - 1));
  TreeBuilder{points, perm, nodes, level_count}.build(0, 0, n, level_count);
  return ClusterTree(std::move(nodes), std::move(perm), leaf_size, level_count);
}

bool is_admissible(const ClusterNode& s, const ClusterNode& t, double eta) {
  const double dist = s.box.distance(t.box);
  if (dist <= 0.0) return false;
  return 0.5 * (s.box.diagonal() + t.box.diagonal()) <= eta * dist;
}

std::optional<BlockStatus> MatrixTree::find(Index s, Index t) const {
  for (const auto& level : levels_) {
    auto it = std::lower_bound(level.begin(), level.end(), std::pair{s, t},
                               [](const BlockNode& nd, const std::pair<Index, Index>& key) {
                                 return std::pair{nd.row, nd.col} < key;
                               });
    if (it != level.end() && it->row == s && it->col == t) return it->status;
  }
  return std::nullopt;
}

MatrixTree build_matrix_tree(const ClusterTree& tree, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  MatrixTree mt;
  const int levels = tree.level_count();
  mt.eta_ = eta;
  mt.levels_.resize(static_cast<std::size_t>(levels) + 1);
  mt.near_.resize(static_cast<std::size_t>(tree.node_count()));
  mt.far_.resize(static_cast<std::size_t>(tree.node_count()));

  std::vector<BlockNode> current{{0, 0, BlockStatus::inner}};
  for (int level = levels; level >= 1 && !current.empty(); --level) {
    std::vector<BlockNode> next;
    for (auto& nd : current) {
      const auto& s = tree.node(nd.row);
      const auto& t = tree.node(nd.col);
      if (is_admissible(s, t, eta)) {
        nd.status = BlockStatus::admissible;
        mt.far_[static_cast<std::size_t>(nd.row)].push_back(nd.col);
        ++mt.admissible_count_;
      } else if (level == 1) {
        nd.status = BlockStatus::dense;
        mt.near_[static_cast<std::size_t>(nd.row)].push_back(nd.col);
        ++mt.dense_count_;
      } else {
        nd.status = BlockStatus::inner;
        for (Index a : {ClusterTree::left_child(nd.row), ClusterTree::right_child(nd.row)})
          for (Index b : {ClusterTree::left_child(nd.col), ClusterTree::right_child(nd.col)})
            next.push_back({a, b, BlockStatus::inner});
      }
    }
    std::sort(current.begin(), current.end(), [](const BlockNode& a, const BlockNode& b) {
      return std::pair{a.row, a.col} < std::pair{b.row, b.col};
    });
    mt.levels_[static_cast<std::size_t>(level)] = std::move(current);
    current = std::move(next);
  }
  for (auto& v : mt.near_) std::sort(v.begin(), v.end());
  for (auto& v : mt.far_) std::sort(v.begin(), v.end());
  return mt;
}

Index sparsity_constant(const MatrixTree& mtree) {
  std::vector<Index> row_count;
  Index best = 0;
  for (int level = 1; level <= mtree.level_count(); ++level) {
    row_count.clear();
    for (const auto& nd : mtree.level_nodes(level)) {
      if (nd.status == BlockStatus::inner) continue;
      if (static_cast<std::size_t>(nd.row) >= row_count.size())
        row_count.resize(static_cast<std::size_t>(nd.row) + 1, 0);
      best = std::max(best, ++row_count[static_cast<std::size_t>(nd.row)]);
    }
  }
  return best;
}

}  // namespace h2sketch
