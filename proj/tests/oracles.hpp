// Independent reference computations used by the tests. Nothing here calls
// into the library's kernel, QR or H2 code.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "h2sketch/geometry.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline double cov(double r, double l) { return std::exp(-r / l); }
inline double ie(double r, double k) { return r == 0.0 ? 0.0 : std::cos(k * r) / r; }

inline double dist(const h2sketch::PointSet& p, Index i, Index j) {
  double s = 0;
  for (int k = 0; k < p.dim; ++k) {
    const double d = p.coords[i * p.dim + k] - p.coords[j * p.dim + k];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Scalar double loop over all pairs; points in whatever order is given.
template <class F>
Matrix dense_kernel(const h2sketch::PointSet& p, F&& f) {
  const Index n = p.size();
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) k(i, j) = f(dist(p, i, j));
  return k;
}

inline Matrix cov_matrix(const h2sketch::PointSet& p, double l = 0.2) {
  return dense_kernel(p, [l](double r) { return cov(r, l); });
}
inline Matrix ie_matrix(const h2sketch::PointSet& p, double k = 3.0) {
  return dense_kernel(p, [k](double r) { return ie(r, k); });
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline double rel_error_2(const Matrix& approx, const Matrix& exact) {
  return spectral_norm(approx - exact) / spectral_norm(exact);
}

/// 2-norm of a symmetric matrix from its eigenvalues; cheaper than an SVD at
/// a few thousand rows.
inline double sym_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double sym_rel_error(const Matrix& approx, const Matrix& exact) {
  return sym_norm(approx - exact) / sym_norm(exact);
}

/// Numerical rank: singular values above tol.
inline Index numerical_rank(const Matrix& a, double tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  Index r = 0;
  for (Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++r;
  return r;
}

/// m x n matrix with singular values sv (length min(m, n)) and random
/// orthogonal factors.
inline Matrix with_spectrum(Index m, Index n, const Eigen::VectorXd& sv, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  auto gauss = [&](Index r, Index c) {
    Matrix g(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) g(i, j) = nd(gen);
    return g;
  };
  const Index k = sv.size();
  Eigen::HouseholderQR<Matrix> qu(gauss(m, k)), qv(gauss(n, k));
  const Matrix u = qu.householderQ() * Matrix::Identity(m, k);
  const Matrix v = qv.householderQ() * Matrix::Identity(n, k);
  return u * sv.asDiagonal() * v.transpose();
}

inline Matrix gaussian(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix g(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) g(i, j) = nd(gen);
  return g;
}

struct Box {
  std::vector<double> lo, hi;
};

/// Bounding box recomputed from member points.
inline Box box_of(const h2sketch::PointSet& p, std::span<const Index> perm, Index b, Index e) {
  Box box{std::vector<double>(p.dim, INFINITY), std::vector<double>(p.dim, -INFINITY)};
  for (Index q = b; q < e; ++q)
    for (int k = 0; k < p.dim; ++k) {
      const double x = p.coords[perm[q] * p.dim + k];
      box.lo[k] = std::min(box.lo[k], x);
      box.hi[k] = std::max(box.hi[k], x);
    }
  return box;
}

inline double diag(const Box& b) {
  double s = 0;
  for (std::size_t k = 0; k < b.lo.size(); ++k) s += (b.hi[k] - b.lo[k]) * (b.hi[k] - b.lo[k]);
  return std::sqrt(s);
}

inline double box_dist(const Box& a, const Box& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.lo.size(); ++k) {
    const double gap = std::max({0.0, a.lo[k] - b.hi[k], b.lo[k] - a.hi[k]});
    s += gap * gap;
  }
  return std::sqrt(s);
}

}  // namespace oracle
