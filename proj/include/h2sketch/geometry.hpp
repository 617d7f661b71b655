#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "h2sketch/common.hpp"

namespace h2sketch {

/// Points in the unit cube, stored row-major (point i occupies
/// coords[i*dim .. i*dim+dim)).
struct PointSet {
  int dim = 3;
  std::vector<double> coords;

  PointSet() = default;
  PointSet(int dim, std::vector<double> coords);

  Index size() const { return dim == 0 ? 0 : static_cast<Index>(coords.size()) / dim; }
  std::span<const double> point(Index i) const {
    return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  /// Copy with point i of the result equal to point order[i] of this set.
  PointSet permuted(std::span<const Index> order) const;
};

struct BoundingBox {
  int dim = 0;
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};

  double diagonal() const;
  /// Minimum Euclidean distance between two boxes (0 when they touch or overlap).
  double distance(const BoundingBox& other) const;
  bool contains(std::span<const double> x) const;
};

struct ClusterNode {
  Index begin = 0;  ///< first tree-ordered index
  Index end = 0;    ///< one past the last
  BoundingBox box;
  int level = 1;    ///< 1 for leaves, level_count() for the root

  Index size() const { return end - begin; }
};

/// Complete binary KD-tree stored in heap order: node 0 is the root, the
/// children of node i are 2i+1 and 2i+2, so every level is a contiguous id
/// range and all leaves share one level.
class ClusterTree {
 public:
  ClusterTree() = default;
  ClusterTree(std::vector<ClusterNode> nodes, std::vector<Index> permutation, Index leaf_size,
              int level_count);

  Index point_count() const { return static_cast<Index>(permutation_.size()); }
  Index leaf_size() const { return leaf_size_; }
  int level_count() const { return level_count_; }
  Index node_count() const { return static_cast<Index>(nodes_.size()); }

  const ClusterNode& node(Index id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::span<const ClusterNode> nodes() const { return nodes_; }

  /// Node ids of a level (1 = leaves) form [level_begin, level_end).
  Index level_begin(int level) const { return (Index{1} << (level_count_ - level)) - 1; }
  Index level_end(int level) const { return (Index{1} << (level_count_ - level + 1)) - 1; }

  bool is_leaf(Index id) const { return nodes_[static_cast<std::size_t>(id)].level == 1; }
  static Index parent(Index id) { return (id - 1) / 2; }
  static Index left_child(Index id) { return 2 * id + 1; }
  static Index right_child(Index id) { return 2 * id + 2; }

  /// permutation()[tree_index] is the original point index.
  std::span<const Index> permutation() const { return permutation_; }
  /// inverse_permutation()[original_index] is the tree index.
  std::span<const Index> inverse_permutation() const { return inverse_; }

  /// Tree-ordered indices [begin, end) of a cluster.
  std::span<const Index> indices(Index id) const;

  /// Leaf cluster containing a tree-ordered index.
  Index leaf_of(Index tree_index) const;
  /// Ancestor of a node at a (higher or equal) level.
  Index ancestor(Index id, int level) const;

 private:
  std::vector<ClusterNode> nodes_;
  std::vector<Index> permutation_;
  std::vector<Index> inverse_;
  std::vector<Index> iota_;
  Index leaf_size_ = 0;
  int level_count_ = 0;
};

enum class BlockStatus { inner, admissible, dense };

struct BlockNode {
  Index row = 0;  ///< cluster id s
  Index col = 0;  ///< cluster id t
  BlockStatus status = BlockStatus::inner;
};

/// Block partition from the dual traversal. Nodes are grouped by cluster
/// level; near() lists the dense partners of a leaf, far() the admissible
/// partners of a cluster at its own level. Both are sorted ascending.
class MatrixTree {
 public:
  MatrixTree() = default;

  int level_count() const { return static_cast<int>(levels_.size()) - 1; }
  double eta() const { return eta_; }
  std::span<const BlockNode> level_nodes(int level) const {
    return levels_[static_cast<std::size_t>(level)];
  }
  std::span<const Index> near(Index cluster) const { return near_[static_cast<std::size_t>(cluster)]; }
  std::span<const Index> far(Index cluster) const { return far_[static_cast<std::size_t>(cluster)]; }

  Index leaf_count() const { return admissible_count_ + dense_count_; }
  Index admissible_leaf_count() const { return admissible_count_; }
  Index dense_leaf_count() const { return dense_count_; }

  /// Status of (s, t) if it is a node of the tree.
  std::optional<BlockStatus> find(Index s, Index t) const;

 private:
  friend MatrixTree build_matrix_tree(const ClusterTree& tree, double eta);

  std::vector<std::vector<BlockNode>> levels_;
  std::vector<std::vector<Index>> near_;
  std::vector<std::vector<Index>> far_;
  double eta_ = 0.0;
  Index admissible_count_ = 0;
  Index dense_count_ = 0;
};

/// Median-split KD-tree: split along the longest box edge (lowest dimension on
/// ties), lower half gets ceil(m/2) points. Throws std::invalid_argument on
/// non-finite coordinates, leaf_size < 2 or an empty point set.
ClusterTree build_cluster_tree(const PointSet& points, Index leaf_size);

/// (D(s) + D(t)) / 2 <= eta * Dist(s, t) with D the box diagonal and Dist the
/// box-to-box distance. Touching or overlapping boxes are never admissible.
bool is_admissible(const ClusterNode& s, const ClusterNode& t, double eta);

MatrixTree build_matrix_tree(const ClusterTree& tree, double eta);

/// Largest number of matrix-tree leaves in any block row of any level.
Index sparsity_constant(const MatrixTree& mtree);

}  // namespace h2sketch
