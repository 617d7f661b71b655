#pragma once

#include <vector>

#include "h2sketch/common.hpp"

namespace h2sketch {

/// Householder QR with greedy max-column-norm pivoting, A P = Q R.
struct PivotedQR {
  Matrix factors;               ///< R on and above the diagonal, reflectors below
  Vector tau;                   ///< reflector coefficients, one per completed step
  std::vector<Index> pivots;    ///< column j of A P is column pivots[j] of A
  Vector diag;                  ///< |R(k,k)| for every completed step, non-increasing

  Index steps() const { return diag.size(); }
  Matrix q() const;  ///< m x steps()
  Matrix r() const;  ///< steps() x n, columns in pivoted order
};

/// Full factorisation when stop_below < 0; otherwise stops after the first
/// step whose diagonal magnitude is <= stop_below.
PivotedQR column_pivoted_qr(const Eigen::Ref<const Matrix>& a, double stop_below = -1.0);

/// Row interpolative decomposition A ~= W * A(J, :).
struct IDResult {
  std::vector<Index> skeleton;  ///< J, local row indices in pivot order
  Matrix interpolation;         ///< W, m x k with W(J, :) = I

  Index rank() const { return static_cast<Index>(skeleton.size()); }
};

/// Computed as the column ID of A^T. The rank is the number of pivoted
/// R-diagonal magnitudes above tol_abs. Throws std::invalid_argument if
/// tol_abs < 0.
IDResult row_id(const Eigen::Ref<const Matrix>& a, double tol_abs);

/// True iff the smallest pivoted-QR diagonal magnitude of the sample block is
/// below tol_abs. An empty block is converged. Requires tol_abs > 0 and at
/// least one column.
bool is_converged(const Eigen::Ref<const Matrix>& yloc, double tol_abs);

}  // namespace h2sketch
