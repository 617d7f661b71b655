#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "h2sketch/bench.hpp"
#include "h2sketch/geometry.hpp"
#include "oracles.hpp"

using namespace h2sketch;

namespace {

PointSet random_points(Index n, int dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> c(static_cast<std::size_t>(n * dim));
  for (auto& x : c) x = u(gen);
  return PointSet(dim, std::move(c));
}

BoundingBox make_box(std::array<double, 3> lo, std::array<double, 3> hi) {
  BoundingBox b;
  b.dim = 3;
  b.lo = lo;
  b.hi = hi;
  return b;
}

ClusterNode node_with(BoundingBox b) {
  ClusterNode nd;
  nd.box = b;
  return nd;
}

// Reference dual traversal on boxes recomputed from the points.
using Leaf = std::tuple<Index, Index, BlockStatus>;

void ref_traverse(const PointSet& p, const ClusterTree& t, double eta, Index s, Index u,
                  std::vector<Leaf>& out) {
  const auto perm = t.permutation();
  const auto bs = oracle::box_of(p, perm, t.node(s).begin, t.node(s).end);
  const auto bt = oracle::box_of(p, perm, t.node(u).begin, t.node(u).end);
  const double d = oracle::box_dist(bs, bt);
  if (d > 0 && (oracle::diag(bs) + oracle::diag(bt)) / 2 <= eta * d) {
    out.emplace_back(s, u, BlockStatus::admissible);
    return;
  }
  if (t.is_leaf(s)) {
    out.emplace_back(s, u, BlockStatus::dense);
    return;
  }
  for (Index a : {ClusterTree::left_child(s), ClusterTree::right_child(s)})
    for (Index b : {ClusterTree::left_child(u), ClusterTree::right_child(u)})
      ref_traverse(p, t, eta, a, b, out);
}

std::vector<Leaf> leaves_of(const MatrixTree& mt) {
  std::vector<Leaf> out;
  for (int l = 1; l <= mt.level_count(); ++l)
    for (const auto& nd : mt.level_nodes(l))
      if (nd.status != BlockStatus::inner) out.emplace_back(nd.row, nd.col, nd.status);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(ClusterTree, PowerOfTwoSplit) {
  const auto t = build_cluster_tree(random_points(512, 3, 1), 64);
  EXPECT_EQ(t.level_count(), 4);
  EXPECT_EQ(t.level_end(1) - t.level_begin(1), 8);
  EXPECT_EQ(t.level_end(2) - t.level_begin(2), 4);
  EXPECT_EQ(t.level_end(3) - t.level_begin(3), 2);
  EXPECT_EQ(t.level_end(4) - t.level_begin(4), 1);
  for (Index s = t.level_begin(1); s < t.level_end(1); ++s) EXPECT_EQ(t.node(s).size(), 64);
}

TEST(ClusterTree, SinglePoint) {
  const auto t = build_cluster_tree(PointSet(3, {0.5, 0.5, 0.5}), 64);
  EXPECT_EQ(t.level_count(), 1);
  EXPECT_EQ(t.node_count(), 1);
  EXPECT_TRUE(t.is_leaf(0));
  const auto mt = build_matrix_tree(t, 0.7);
  ASSERT_EQ(leaves_of(mt).size(), 1u);
  EXPECT_EQ(std::get<2>(leaves_of(mt)[0]), BlockStatus::dense);
  EXPECT_EQ(sparsity_constant(mt), 1);
}

TEST(ClusterTree, GridLeafBoxesMatchRecomputation) {
  const auto pts = generate_points(4096, 3, PointMode::grid, 0);
  const auto t = build_cluster_tree(pts, 64);
  ASSERT_EQ(t.level_end(1) - t.level_begin(1), 64);
  for (Index s = t.level_begin(1); s < t.level_end(1); ++s) {
    const auto& nd = t.node(s);
    const auto ref = oracle::box_of(pts, t.permutation(), nd.begin, nd.end);
    for (int k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(nd.box.lo[k], ref.lo[k]);
      EXPECT_DOUBLE_EQ(nd.box.hi[k], ref.hi[k]);
      // 4 lattice points per axis with spacing 1/15.
      EXPECT_NEAR(ref.hi[k] - ref.lo[k], 3.0 / 15.0, 1e-15);
    }
  }
}

class TreeInvariants : public ::testing::TestWithParam<std::tuple<Index, int, Index>> {};

TEST_P(TreeInvariants, Hold) {
  const auto [n, dim, leaf] = GetParam();
  const auto pts = random_points(n, dim, static_cast<std::uint64_t>(n * 7 + dim));
  const auto t = build_cluster_tree(pts, leaf);

  std::vector<Index> sorted(t.permutation().begin(), t.permutation().end());
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < n; ++i) ASSERT_EQ(sorted[static_cast<std::size_t>(i)], i);
  for (Index i = 0; i < n; ++i) ASSERT_EQ(t.inverse_permutation()[t.permutation()[i]], i);

  EXPECT_EQ(t.node_count(), (Index{1} << t.level_count()) - 1);
  EXPECT_EQ(t.node(0).begin, 0);
  EXPECT_EQ(t.node(0).end, n);
  for (Index id = 0; id < t.node_count(); ++id) {
    const auto& nd = t.node(id);
    const auto ref = oracle::box_of(pts, t.permutation(), nd.begin, nd.end);
    for (int k = 0; k < dim; ++k) {
      EXPECT_EQ(nd.box.lo[k], ref.lo[k]);
      EXPECT_EQ(nd.box.hi[k], ref.hi[k]);
    }
    if (t.is_leaf(id)) {
      EXPECT_LE(nd.size(), leaf);
      EXPECT_EQ(nd.level, 1);
      continue;
    }
    const auto& a = t.node(ClusterTree::left_child(id));
    const auto& b = t.node(ClusterTree::right_child(id));
    EXPECT_EQ(a.begin, nd.begin);
    EXPECT_EQ(a.end, b.begin);
    EXPECT_EQ(b.end, nd.end);
    EXPECT_EQ(a.size(), (nd.size() + 1) / 2);
    EXPECT_EQ(a.level, nd.level - 1);

    // Split along the longest edge (lowest index on ties) at the median.
    int axis = 0;
    for (int k = 1; k < dim; ++k)
      if (ref.hi[k] - ref.lo[k] > ref.hi[axis] - ref.lo[axis]) axis = k;
    double lower_max = -INFINITY, upper_min = INFINITY;
    for (Index q = a.begin; q < a.end; ++q)
      lower_max = std::max(lower_max, pts.coords[t.permutation()[q] * dim + axis]);
    for (Index q = b.begin; q < b.end; ++q)
      upper_min = std::min(upper_min, pts.coords[t.permutation()[q] * dim + axis]);
    EXPECT_LE(lower_max, upper_min);
  }
  // All leaves on one level; the level above the leaves would not fit.
  for (Index id = 0; id < t.node_count(); ++id)
    EXPECT_EQ(t.is_leaf(id), id >= t.level_begin(1));
  if (t.level_count() > 1) {
    Index biggest = 0;
    for (Index s = t.level_begin(2); s < t.level_end(2); ++s) biggest = std::max(biggest, t.node(s).size());
    EXPECT_GT(biggest, leaf);
  }
  for (Index i = 0; i < n; i += std::max<Index>(1, n / 37)) {
    const Index l = t.leaf_of(i);
    EXPECT_TRUE(t.node(l).begin <= i && i < t.node(l).end);
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, TreeInvariants,
                         ::testing::Values(std::make_tuple(Index{2}, 1, Index{2}),
                                           std::make_tuple(Index{100}, 1, Index{8}),
                                           std::make_tuple(Index{777}, 2, Index{16}),
                                           std::make_tuple(Index{1000}, 3, Index{64}),
                                           std::make_tuple(Index{1025}, 3, Index{64}),
                                           std::make_tuple(Index{3001}, 3, Index{50})));

TEST(ClusterTree, Errors) {
  EXPECT_THROW(build_cluster_tree(random_points(10, 3, 0), 1), std::invalid_argument);
  EXPECT_THROW(build_cluster_tree(PointSet(3, {}), 4), std::invalid_argument);
  EXPECT_THROW(build_cluster_tree(PointSet(2, {0.0, 0.1, NAN, 0.2}), 4), std::invalid_argument);
  EXPECT_THROW(build_cluster_tree(PointSet(2, {0.0, 0.1, INFINITY, 0.2}), 4), std::invalid_argument);
  EXPECT_THROW(PointSet(4, {0, 0, 0, 0}), std::invalid_argument);
  const auto t = build_cluster_tree(random_points(10, 3, 0), 4);
  EXPECT_THROW(t.leaf_of(10), std::out_of_range);
}

TEST(Admissibility, Examples) {
  const double s3 = 1.0 / std::sqrt(3.0);  // unit diagonal
  const auto a = node_with(make_box({0, 0, 0}, {s3, s3, s3}));
  const auto far2 = node_with(make_box({s3 + 2, 0, 0}, {2 * s3 + 2, s3, s3}));
  const auto far1 = node_with(make_box({s3 + 1, 0, 0}, {2 * s3 + 1, s3, s3}));
  EXPECT_NEAR(a.box.diagonal(), 1.0, 1e-15);
  EXPECT_NEAR(a.box.distance(far2.box), 2.0, 1e-15);
  EXPECT_TRUE(is_admissible(a, far2, 0.7));
  EXPECT_FALSE(is_admissible(a, far1, 0.7));
  EXPECT_FALSE(is_admissible(a, a, 0.7));
  EXPECT_FALSE(is_admissible(a, a, 1e6));
}

TEST(MatrixTree, MatchesReferenceTraversal) {
  for (double eta : {0.5, 0.7, 1.5}) {
    const auto pts = random_points(1500, 3, 11);
    const auto t = build_cluster_tree(pts, 32);
    const auto mt = build_matrix_tree(t, eta);
    std::vector<Leaf> ref;
    ref_traverse(pts, t, eta, 0, 0, ref);
    std::sort(ref.begin(), ref.end());
    EXPECT_EQ(leaves_of(mt), ref) << "eta " << eta;
    EXPECT_EQ(mt.leaf_count(), static_cast<Index>(ref.size()));
  }
}

TEST(MatrixTree, TilingSymmetryAndAdjacency) {
  const auto pts = random_points(2000, 3, 5);
  const auto t = build_cluster_tree(pts, 32);
  for (double eta : {0.5, 0.7}) {
    const auto mt = build_matrix_tree(t, eta);
    const auto leaves = leaves_of(mt);
    double area = 0;
    for (const auto& [s, u, st] : leaves) area += double(t.node(s).size()) * double(t.node(u).size());
    EXPECT_EQ(area, 2000.0 * 2000.0);

    std::mt19937_64 gen(3);
    std::uniform_int_distribution<Index> pick(0, 1999);
    for (int trial = 0; trial < 1000; ++trial) {
      const Index i = pick(gen), j = pick(gen);
      int hits = 0;
      for (const auto& [s, u, st] : leaves)
        if (t.node(s).begin <= i && i < t.node(s).end && t.node(u).begin <= j && j < t.node(u).end) ++hits;
      ASSERT_EQ(hits, 1);
    }

    std::set<std::tuple<Index, Index>> far_pairs, near_pairs;
    for (const auto& [s, u, st] : leaves) {
      EXPECT_EQ(mt.find(u, s), st);
      EXPECT_EQ(t.node(s).level, t.node(u).level);
      if (st == BlockStatus::admissible) {
        far_pairs.insert({s, u});
        if (s != 0) EXPECT_EQ(mt.find(ClusterTree::parent(s), ClusterTree::parent(u)), BlockStatus::inner);
      } else {
        near_pairs.insert({s, u});
      }
    }
    std::set<std::tuple<Index, Index>> far_adj, near_adj;
    for (Index s = 0; s < t.node_count(); ++s) {
      for (Index u : mt.far(s)) far_adj.insert({s, u});
      for (Index u : mt.near(s)) near_adj.insert({s, u});
      EXPECT_TRUE(std::is_sorted(mt.far(s).begin(), mt.far(s).end()));
      EXPECT_TRUE(std::is_sorted(mt.near(s).begin(), mt.near(s).end()));
    }
    EXPECT_EQ(far_adj, far_pairs);
    EXPECT_EQ(near_adj, near_pairs);
  }
}

TEST(MatrixTree, TinyEtaIsAllDense) {
  const auto pts = random_points(700, 2, 8);
  const auto t = build_cluster_tree(pts, 32);
  const auto mt = build_matrix_tree(t, 1e-12);
  EXPECT_EQ(mt.admissible_leaf_count(), 0);
  const Index leaves = t.level_end(1) - t.level_begin(1);
  EXPECT_EQ(mt.dense_leaf_count(), leaves * leaves);
  EXPECT_THROW(build_matrix_tree(t, 0.0), std::invalid_argument);
}

TEST(MatrixTree, LeafCountNonIncreasingInEta) {
  const auto pts = random_points(3000, 3, 9);
  const auto t = build_cluster_tree(pts, 32);
  Index prev = std::numeric_limits<Index>::max();
  for (double eta : {0.3, 0.5, 0.7, 1.0, 2.0, 5.0}) {
    const Index c = build_matrix_tree(t, eta).leaf_count();
    EXPECT_LE(c, prev) << eta;
    prev = c;
  }
}

TEST(MatrixTree, SmallerEtaRefinesMore) {
  const auto pts = generate_points(32768, 3, PointMode::grid, 0);
  const auto t = build_cluster_tree(pts, 64);
  const auto a = build_matrix_tree(t, 0.5), b = build_matrix_tree(t, 0.7);
  EXPECT_GT(a.leaf_count(), b.leaf_count());
  EXPECT_GT(sparsity_constant(a), sparsity_constant(b));
}

TEST(SparsityConstant, BruteForce) {
  const auto pts = random_points(4000, 3, 21);
  const auto t = build_cluster_tree(pts, 32);
  const auto mt = build_matrix_tree(t, 0.7);
  std::vector<Leaf> ref;
  ref_traverse(pts, t, 0.7, 0, 0, ref);
  std::map<Index, Index> per_row;
  for (const auto& [s, u, st] : ref) ++per_row[s];
  Index best = 0;
  for (const auto& [s, c] : per_row) best = std::max(best, c);
  EXPECT_EQ(sparsity_constant(mt), best);
}

TEST(SparsityConstant, WeakAdmissibilityTwoLeaves) {
  // Two well separated halves on a line.
  std::vector<double> c;
  for (int i = 0; i < 8; ++i) c.push_back(i < 4 ? 0.01 * i : 0.9 + 0.01 * i);
  const auto t = build_cluster_tree(PointSet(1, c), 4);
  ASSERT_EQ(t.level_count(), 2);
  EXPECT_EQ(sparsity_constant(build_matrix_tree(t, 1e9)), 2);
}
