#include "h2sketch/io.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace h2sketch {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("unexpected end of file");
  return v;
}

void put_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("unexpected end of file");
}

// rows u64, cols u64, column-major data.
void put_matrix(std::ostream& os, const Matrix& a) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(a.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(a.cols()));
  put_doubles(os, a.data(), static_cast<std::size_t>(a.size()));
}

Matrix get_matrix(std::istream& is) {
  const auto r = get<std::uint64_t>(is);
  const auto c = get<std::uint64_t>(is);
  if (r > (1ULL << 32) || c > (1ULL << 32)) throw std::runtime_error("corrupt matrix header");
  Matrix a(static_cast<Index>(r), static_cast<Index>(c));
  get_doubles(is, a.data(), static_cast<std::size_t>(a.size()));
  return a;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return is;
}

void expect_shape(const Matrix& a, Index r, Index c, const char* what) {
  if (a.rows() != r || a.cols() != c)
    throw std::runtime_error(std::string("h2 file: ") + what + " has the wrong shape");
}

}  // namespace

void write_points(const std::string& path, const PointSet& pts) {
  auto os = open_out(path);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(pts.dim));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(pts.size()));
  put_doubles(os, pts.coords.data(), pts.coords.size());
  if (!os) throw std::runtime_error("write failed: " + path);
}

PointSet read_points(const std::string& path) {
  auto is = open_in(path);
  const auto dim = get<std::uint32_t>(is);
  const auto n = get<std::uint64_t>(is);
  if (dim < 1 || dim > 3) throw std::runtime_error(path + ": dimension must be 1, 2 or 3");
  if (n > (1ULL << 40)) throw std::runtime_error(path + ": corrupt point count");
  std::vector<double> coords(static_cast<std::size_t>(n) * dim);
  get_doubles(is, coords.data(), coords.size());
  return PointSet(static_cast<int>(dim), std::move(coords));
}

void write_dense(std::ostream& os, const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("write_dense: matrix is not square");
  put<std::uint32_t>(os, dense_magic);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(a.rows()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = a;
  put_doubles(os, rm.data(), static_cast<std::size_t>(rm.size()));
}

Matrix read_dense(std::istream& is) {
  if (get<std::uint32_t>(is) != dense_magic) throw std::runtime_error("dense file: bad magic");
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 20)) throw std::runtime_error("dense file: corrupt size");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
      static_cast<Index>(n), static_cast<Index>(n));
  get_doubles(is, rm.data(), static_cast<std::size_t>(rm.size()));
  return rm;
}

void write_dense_file(const std::string& path, const Matrix& a) {
  auto os = open_out(path);
  write_dense(os, a);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Matrix read_dense_file(const std::string& path) {
  auto is = open_in(path);
  return read_dense(is);
}

void save_h2(std::ostream& os, const H2Matrix& m) {
  const auto& tree = m.tree();
  const auto& mt = m.matrix_tree();
  put<std::uint32_t>(os, h2_magic);
  put<std::uint32_t>(os, h2_version);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(tree.point_count()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(tree.leaf_size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tree.level_count()));
  put<double>(os, mt.eta());

  for (const auto& nd : tree.nodes()) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(nd.begin));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(nd.end));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nd.level));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nd.box.dim));
    put_doubles(os, nd.box.lo.data(), 3);
    put_doubles(os, nd.box.hi.data(), 3);
  }
  for (Index p : tree.permutation()) put<std::uint64_t>(os, static_cast<std::uint64_t>(p));

  for (int level = 1; level <= m.top_level(); ++level) {
    for (Index s = tree.level_begin(level); s < tree.level_end(level); ++s) {
      const auto sk = m.skeleton(s);
      put<std::uint64_t>(os, sk.size());
      for (Index j : sk) put<std::uint64_t>(os, static_cast<std::uint64_t>(j));
      put_matrix(os, level == 1 ? m.leaf_basis(s) : m.transfer(ClusterTree::left_child(s)));
      if (level > 1) put_matrix(os, m.transfer(ClusterTree::right_child(s)));
    }
    for (Index s = tree.level_begin(level); s < tree.level_end(level); ++s) {
      put<std::uint64_t>(os, mt.far(s).size());
      for (const auto& b : m.couplings(s)) put_matrix(os, b);
    }
  }
  for (Index s = tree.level_begin(1); s < tree.level_end(1); ++s) {
    put<std::uint64_t>(os, mt.near(s).size());
    for (const auto& d : m.dense_blocks(s)) {
      put<std::uint32_t>(os, dense_magic);
      put<std::uint64_t>(os, static_cast<std::uint64_t>(d.rows()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(d.cols()));
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = d;
      put_doubles(os, rm.data(), static_cast<std::size_t>(rm.size()));
    }
  }
}

class H2Reader {
 public:
  static H2Matrix read(std::istream& is) {
    if (get<std::uint32_t>(is) != h2_magic) throw std::runtime_error("h2 file: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != h2_version)
      throw std::runtime_error("h2 file: unsupported version " + std::to_string(version));
    const auto n = static_cast<Index>(get<std::uint64_t>(is));
    const auto leaf_size = static_cast<Index>(get<std::uint64_t>(is));
    const auto levels = static_cast<int>(get<std::uint32_t>(is));
    const double eta = get<double>(is);
    if (levels < 1 || levels > 40 || n < 1) throw std::runtime_error("h2 file: corrupt header");

    const Index node_count = (Index{1} << levels) - 1;
    std::vector<ClusterNode> nodes(static_cast<std::size_t>(node_count));
    for (auto& nd : nodes) {
      nd.begin = static_cast<Index>(get<std::uint64_t>(is));
      nd.end = static_cast<Index>(get<std::uint64_t>(is));
      nd.level = static_cast<int>(get<std::uint32_t>(is));
      nd.box.dim = static_cast<int>(get<std::uint32_t>(is));
      get_doubles(is, nd.box.lo.data(), 3);
      get_doubles(is, nd.box.hi.data(), 3);
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (auto& p : perm) p = static_cast<Index>(get<std::uint64_t>(is));
    ClusterTree tree(std::move(nodes), std::move(perm), leaf_size, levels);
    MatrixTree mt = build_matrix_tree(tree, eta);
    H2Matrix m(tree, std::move(mt));
    const auto& t = m.tree_;
    const auto& mtr = m.mtree_;

    for (int level = 1; level < levels; ++level) {
      for (Index s = t.level_begin(level); s < t.level_end(level); ++s) {
        const auto k = get<std::uint64_t>(is);
        if (k > static_cast<std::uint64_t>(n)) throw std::runtime_error("h2 file: corrupt rank");
        auto& sk = m.skeletons_[static_cast<std::size_t>(s)];
        sk.resize(static_cast<std::size_t>(k));
        for (auto& j : sk) {
          j = static_cast<Index>(get<std::uint64_t>(is));
          if (j < t.node(s).begin || j >= t.node(s).end)
            throw std::runtime_error("h2 file: skeleton index outside its cluster");
        }
        if (level == 1) {
          m.leaf_bases_[static_cast<std::size_t>(s)] = get_matrix(is);
          expect_shape(m.leaf_bases_[static_cast<std::size_t>(s)], t.node(s).size(),
                       static_cast<Index>(k), "leaf basis");
        } else {
          const Index c1 = ClusterTree::left_child(s), c2 = ClusterTree::right_child(s);
          m.transfers_[static_cast<std::size_t>(c1)] = get_matrix(is);
          m.transfers_[static_cast<std::size_t>(c2)] = get_matrix(is);
          expect_shape(m.transfers_[static_cast<std::size_t>(c1)], m.rank(c1), static_cast<Index>(k),
                       "transfer");
          expect_shape(m.transfers_[static_cast<std::size_t>(c2)], m.rank(c2), static_cast<Index>(k),
                       "transfer");
        }
      }
      for (Index s = t.level_begin(level); s < t.level_end(level); ++s) {
        const auto cnt = get<std::uint64_t>(is);
        const auto far = mtr.far(s);
        if (cnt != far.size()) throw std::runtime_error("h2 file: coupling count mismatch");
        for (std::size_t q = 0; q < far.size(); ++q) {
          Matrix b = get_matrix(is);
          expect_shape(b, m.rank(s), m.rank(far[q]), "coupling");
          m.couplings_[static_cast<std::size_t>(s)][q] = std::move(b);
        }
      }
    }
    for (Index s = t.level_begin(1); s < t.level_end(1); ++s) {
      const auto cnt = get<std::uint64_t>(is);
      const auto near = mtr.near(s);
      if (cnt != near.size()) throw std::runtime_error("h2 file: dense block count mismatch");
      for (std::size_t q = 0; q < near.size(); ++q) {
        if (get<std::uint32_t>(is) != dense_magic) throw std::runtime_error("h2 file: bad block magic");
        const auto r = static_cast<Index>(get<std::uint64_t>(is));
        const auto c = static_cast<Index>(get<std::uint64_t>(is));
        if (r != t.node(s).size() || c != t.node(near[q]).size())
          throw std::runtime_error("h2 file: dense block has the wrong shape");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(r, c);
        get_doubles(is, rm.data(), static_cast<std::size_t>(rm.size()));
        m.dense_[static_cast<std::size_t>(s)][q] = rm;
      }
    }
    return m;
  }
};

H2Matrix load_h2(std::istream& is) { return H2Reader::read(is); }

void save_h2_file(const std::string& path, const H2Matrix& m) {
  auto os = open_out(path);
  save_h2(os, m);
  if (!os) throw std::runtime_error("write failed: " + path);
}

H2Matrix load_h2_file(const std::string& path) {
  auto is = open_in(path);
  return load_h2(is);
}

std::string tree_to_json(const ClusterTree& tree) {
  nlohmann::ordered_json j;
  j["n"] = tree.point_count();
  j["leaf_size"] = tree.leaf_size();
  j["levels"] = tree.level_count();
  auto& arr = j["nodes"] = nlohmann::ordered_json::array();
  for (Index id = 0; id < tree.node_count(); ++id) {
    const auto& nd = tree.node(id);
    nlohmann::ordered_json e;
    e["id"] = id;
    e["level"] = nd.level;
    e["begin"] = nd.begin;
    e["end"] = nd.end;
    e["lo"] = std::vector<double>(nd.box.lo.begin(), nd.box.lo.begin() + nd.box.dim);
    e["hi"] = std::vector<double>(nd.box.hi.begin(), nd.box.hi.begin() + nd.box.dim);
    arr.push_back(std::move(e));
  }
  return j.dump(1);
}

std::string stats_to_json(const ConstructionStats& stats, bool include_times) {
  nlohmann::ordered_json j;
  j["total_samples"] = stats.total_samples;
  j["norm_estimate"] = stats.norm_estimate;
  j["eps_abs"] = stats.eps_abs;
  auto& lv = j["levels"] = nlohmann::ordered_json::array();
  for (const auto& l : stats.levels)
    lv.push_back({{"level", l.level},
                  {"rank_min", l.rank_min},
                  {"rank_max", l.rank_max},
                  {"rounds", l.rounds},
                  {"samples", l.samples}});
  if (include_times) {
    const auto& t = stats.times_ms;
    j["times_ms"] = {{"rand", t.rand},
                     {"sample", t.sample},
                     {"bsr_subtract", t.bsr_subtract},
                     {"convergence", t.convergence},
                     {"id", t.id},
                     {"shrink", t.shrink},
                     {"gen", t.gen},
                     {"misc", t.misc}};
    j["total_ms"] = stats.total_ms;
  }
  return j.dump(1);
}

}  // namespace h2sketch
