#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "h2sketch/common.hpp"
#include "h2sketch/construction.hpp"
#include "h2sketch/geometry.hpp"
#include "h2sketch/h2_matrix.hpp"

namespace h2sketch {

// All binary formats are little-endian.

/// Point file: dim u32, n u64, then n * dim f64 (point-major).
void write_points(const std::string& path, const PointSet& pts);
PointSet read_points(const std::string& path);

inline constexpr std::uint32_t dense_magic = 0x4e443248;  // "H2DN"
inline constexpr std::uint32_t h2_magic = 0x4b533248;     // "H2SK"
inline constexpr std::uint32_t h2_version = 1;

/// Square matrix: magic u32, n u64, then n * n f64 row-major.
void write_dense(std::ostream& os, const Matrix& a);
Matrix read_dense(std::istream& is);
void write_dense_file(const std::string& path, const Matrix& a);
Matrix read_dense_file(const std::string& path);

/// Single-file container: header, cluster tree, then per level the ranks,
/// skeletons and bases / transfers, the couplings of every level and the
/// dense leaf blocks. The matrix tree is rebuilt from the stored eta.
void save_h2(std::ostream& os, const H2Matrix& m);
H2Matrix load_h2(std::istream& is);
void save_h2_file(const std::string& path, const H2Matrix& m);
H2Matrix load_h2_file(const std::string& path);

/// Node ranges, levels and boxes.
std::string tree_to_json(const ClusterTree& tree);

/// Stats as JSON; phase times are in milliseconds and left out when
/// include_times is false, which makes the output reproducible.
std::string stats_to_json(const ConstructionStats& stats, bool include_times = true);

}  // namespace h2sketch
