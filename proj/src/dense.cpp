#include "h2sketch/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Householder>

namespace h2sketch {

PivotedQR column_pivoted_qr(const Eigen::Ref<const Matrix>& a, double stop_below) {
  const Index m = a.rows();
  const Index n = a.cols();
  const Index kmax = std::min(m, n);

  PivotedQR qr;
  qr.factors = a;
  qr.pivots.resize(static_cast<std::size_t>(n));
  std::iota(qr.pivots.begin(), qr.pivots.end(), Index{0});
  Vector tau(kmax);
  Vector diag(kmax);
  Vector work(n);

  Index k = 0;
  for (; k < kmax; ++k) {
    // Trailing column norms are recomputed rather than downdated; the blocks
    // here are small and this keeps the pivot order exact.
    Index best = k;
    double best_norm = -1.0;
    for (Index j = k; j < n; ++j) {
      const double nrm = qr.factors.col(j).tail(m - k).squaredNorm();
      if (nrm > best_norm) {
        best_norm = nrm;
        best = j;
      }
    }
    if (best != k) {
      qr.factors.col(k).swap(qr.factors.col(best));
      std::swap(qr.pivots[static_cast<std::size_t>(k)], qr.pivots[static_cast<std::size_t>(best)]);
    }

    double beta = 0.0;
    double t = 0.0;
    qr.factors.col(k).tail(m - k).makeHouseholderInPlace(t, beta);
    qr.factors(k, k) = beta;
    tau(k) = t;
    if (k + 1 < n) {
      qr.factors.bottomRightCorner(m - k, n - k - 1)
          .applyHouseholderOnTheLeft(qr.factors.col(k).tail(m - k - 1), t, work.data());
    }
    diag(k) = std::abs(beta);
    if (stop_below >= 0.0 && diag(k) <= stop_below) {
      ++k;
      break;
    }
  }
  qr.tau = tau.head(k);
  qr.diag = diag.head(k);
  return qr;
}

Matrix PivotedQR::q() const {
  const Index m = factors.rows();
  const Index k = steps();
  Matrix q = Matrix::Identity(m, k);
  Vector work(k);
  for (Index i = k - 1; i >= 0; --i) {
    q.bottomRows(m - i).applyHouseholderOnTheLeft(factors.col(i).tail(m - i - 1), tau(i),
                                                   work.data());
  }
  return q;
}

Matrix PivotedQR::r() const {
  Matrix r = factors.topRows(steps());
  r.triangularView<Eigen::StrictlyLower>().setZero();
  return r;
}

IDResult row_id(const Eigen::Ref<const Matrix>& a, double tol_abs) {
  if (tol_abs < 0.0) throw std::invalid_argument("ID tolerance must be nonnegative");
  const Index m = a.rows();
  const Matrix at = a.transpose();
  const PivotedQR qr = column_pivoted_qr(at, tol_abs);

  Index k = 0;
  while (k < qr.steps() && qr.diag(k) > tol_abs) ++k;

  IDResult id;
  id.skeleton.assign(qr.pivots.begin(), qr.pivots.begin() + k);
  id.interpolation = Matrix::Zero(m, k);
  for (Index i = 0; i < k; ++i) id.interpolation(qr.pivots[static_cast<std::size_t>(i)], i) = 1.0;
  if (k > 0 && k < m) {
    // T = R1^{-1} R2; the redundant rows of W are the columns of T.
    const Matrix t = qr.factors.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(
        qr.factors.block(0, k, k, m - k));
    for (Index j = 0; j < m - k; ++j)
      id.interpolation.row(qr.pivots[static_cast<std::size_t>(k + j)]) = t.col(j).transpose();
  }
  return id;
}

bool is_converged(const Eigen::Ref<const Matrix>& yloc, double tol_abs) {
  if (!(tol_abs > 0.0)) throw std::invalid_argument("convergence tolerance must be positive");
  if (yloc.cols() < 1) throw std::invalid_argument("convergence test needs at least one sample");
  if (yloc.rows() == 0) return true;
  // Pivoted diagonals are non-increasing, so it is enough to stop at the
  // first one that falls under the threshold.
  const PivotedQR qr = column_pivoted_qr(yloc, std::nextafter(tol_abs, 0.0));
  return qr.steps() > 0 && qr.diag(qr.steps() - 1) < tol_abs;
}

}  // namespace h2sketch
