#include "h2sketch/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace h2sketch {

namespace {

// Coordinates of the listed points, one column per dimension.
Matrix gather(const PointSet& pts, std::span<const Index> ids) {
  Matrix out(static_cast<Index>(ids.size()), pts.dim);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int k = 0; k < pts.dim; ++k) out(static_cast<Index>(i), k) = pts.coords[static_cast<std::size_t>(ids[i] * pts.dim + k)];
  return out;
}

Matrix gather_range(const PointSet& pts, Index begin, Index count) {
  Matrix out(count, pts.dim);
  for (Index i = 0; i < count; ++i)
    for (int k = 0; k < pts.dim; ++k) out(i, k) = pts.coords[static_cast<std::size_t>((begin + i) * pts.dim + k)];
  return out;
}

// Lengths are padded to a multiple of this so every value goes through the
// packet code path; batch and single-entry evaluation then agree bitwise.
constexpr Index pad = 16;

Index padded(Index m) { return (m + pad - 1) / pad * pad; }

void kernel_values(const KernelSpec& spec, Eigen::ArrayXd& r) {
  if (const auto* cov = std::get_if<ExponentialCovariance>(&spec)) {
    r = (r * (-1.0 / cov->correlation_length)).exp();
  } else {
    const double wave = std::get<HelmholtzIE>(spec).wavenumber;
    r = (r == 0.0).select(0.0, (r * wave).cos() / r);
  }
}

// out(i, j) = kernel(|x_i - y_j|), vectorised over the column of a tile.
void kernel_tile(const KernelSpec& spec, const Matrix& xs, const Matrix& ys, Eigen::Ref<Matrix> out) {
  const Index m = xs.rows(), n = ys.rows(), mp = padded(m);
  Matrix xp = Matrix::Zero(mp, xs.cols());
  xp.topRows(m) = xs;
  Eigen::ArrayXd r(mp);
  for (Index j = 0; j < n; ++j) {
    r = (xp.col(0).array() - ys(j, 0)).square();
    for (Index k = 1; k < xp.cols(); ++k) r += (xp.col(k).array() - ys(j, k)).square();
    r = r.sqrt();
    kernel_values(spec, r);
    out.col(j) = r.head(m).matrix();
  }
}

}  // namespace

double eval_kernel_at_distance(const KernelSpec& spec, double r) {
  Eigen::ArrayXd v = Eigen::ArrayXd::Constant(pad, r);
  kernel_values(spec, v);
  return v(0);
}

double eval_entry(const KernelSpec& spec, std::span<const double> x, std::span<const double> y) {
  const auto dim = static_cast<Index>(x.size());
  const Matrix xs = Eigen::Map<const Matrix>(x.data(), 1, dim);
  const Matrix ys = Eigen::Map<const Matrix>(y.data(), 1, dim);
  Matrix out(1, 1);
  kernel_tile(spec, xs, ys, out);
  return out(0, 0);
}

void validate(const KernelSpec& spec) {
  const double param = std::visit(
      [](const auto& k) {
        if constexpr (std::is_same_v<std::decay_t<decltype(k)>, ExponentialCovariance>)
          return k.correlation_length;
        else
          return k.wavenumber;
      },
      spec);
  if (!(param > 0.0) || !std::isfinite(param))
    throw std::invalid_argument("kernel parameter must be positive and finite");
}

std::vector<Matrix> EntryEvaluator::eval_blocks(std::span<const BlockRequest> requests) const {
  std::vector<Matrix> out(requests.size());
  const auto count = static_cast<std::ptrdiff_t>(requests.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& req = requests[static_cast<std::size_t>(i)];
    auto& block = out[static_cast<std::size_t>(i)];
    block.resize(static_cast<Index>(req.rows.size()), static_cast<Index>(req.cols.size()));
    eval_block(req.rows, req.cols, block);
  }
  return out;
}

std::vector<Matrix> generate_blocks(const EntryEvaluator& ev, std::span<const BlockRequest> requests) {
  const Index n = ev.size();
  for (std::size_t r = 0; r < requests.size(); ++r) {
    for (auto list : {requests[r].rows, requests[r].cols})
      for (Index i : list)
        if (i < 0 || i >= n)
          throw std::out_of_range("block request " + std::to_string(r) + ": index " +
                                  std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  }
  return ev.eval_blocks(requests);
}

KernelEvaluator::KernelEvaluator(PointSet tree_ordered_points, KernelSpec spec)
    : points_(std::move(tree_ordered_points)), spec_(spec) {
  validate(spec_);
}

void KernelEvaluator::eval_block(std::span<const Index> rows, std::span<const Index> cols,
                                 Eigen::Ref<Matrix> out) const {
  if (rows.empty() || cols.empty()) return;
  kernel_tile(spec_, gather(points_, rows), gather(points_, cols), out);
}

DenseMatrixEvaluator::DenseMatrixEvaluator(std::shared_ptr<const Matrix> matrix)
    : matrix_(std::move(matrix)) {
  if (!matrix_ || matrix_->rows() != matrix_->cols())
    throw std::invalid_argument("dense evaluator needs a square matrix");
}

void DenseMatrixEvaluator::eval_block(std::span<const Index> rows, std::span<const Index> cols,
                                      Eigen::Ref<Matrix> out) const {
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Index>(i), static_cast<Index>(j)) = (*matrix_)(rows[i], cols[j]);
}

KernelSampler::KernelSampler(PointSet tree_ordered_points, KernelSpec spec)
    : points_(std::move(tree_ordered_points)), spec_(spec) {
  validate(spec_);
}

Matrix KernelSampler::apply(const Matrix& omega) const {
  const Index n = size();
  if (omega.rows() != n) throw std::invalid_argument("sampler input has wrong row count");
  constexpr Index tile = 256;
  Matrix y = Matrix::Zero(n, omega.cols());
  const Index row_tiles = (n + tile - 1) / tile;
#pragma omp parallel
  {
    Matrix block(tile, tile);
#pragma omp for schedule(dynamic, 1)
    for (Index rt = 0; rt < row_tiles; ++rt) {
      const Index r0 = rt * tile;
      const Index rn = std::min(tile, n - r0);
      const Matrix xs = gather_range(points_, r0, rn);
      for (Index c0 = 0; c0 < n; c0 += tile) {
        const Index cn = std::min(tile, n - c0);
        kernel_tile(spec_, xs, gather_range(points_, c0, cn), block.topLeftCorner(rn, cn));
        y.middleRows(r0, rn).noalias() += block.topLeftCorner(rn, cn) * omega.middleRows(c0, cn);
      }
    }
  }
  return y;
}

DenseMatrixSampler::DenseMatrixSampler(std::shared_ptr<const Matrix> matrix)
    : matrix_(std::move(matrix)) {
  if (!matrix_ || matrix_->rows() != matrix_->cols())
    throw std::invalid_argument("dense sampler needs a square matrix");
}

Matrix DenseMatrixSampler::apply(const Matrix& omega) const {
  if (omega.rows() != size()) throw std::invalid_argument("sampler input has wrong row count");
  const Index n = size();
  constexpr Index tile = 256;
  Matrix y(n, omega.cols());
  const Index row_tiles = (n + tile - 1) / tile;
#pragma omp parallel for schedule(static)
  for (Index rt = 0; rt < row_tiles; ++rt) {
    const Index r0 = rt * tile;
    const Index rn = std::min(tile, n - r0);
    y.middleRows(r0, rn).noalias() = matrix_->middleRows(r0, rn) * omega;
  }
  return y;
}

Matrix dense_kernel_matrix(const PointSet& pts, const KernelSpec& spec) {
  validate(spec);
  const Index n = pts.size();
  Matrix k(n, n);
  const Matrix all = gather_range(pts, 0, n);
  constexpr Index tile = 256;
#pragma omp parallel for schedule(dynamic, 1)
  for (Index c0 = 0; c0 < n; c0 += tile) {
    const Index cn = std::min(tile, n - c0);
    kernel_tile(spec, all, all.middleRows(c0, cn), k.middleCols(c0, cn));
  }
  return k;
}

Matrix to_tree_order(const Matrix& original, std::span<const Index> permutation) {
  const auto n = static_cast<Index>(permutation.size());
  if (original.rows() != n || original.cols() != n)
    throw std::invalid_argument("matrix size does not match the permutation");
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = original(permutation[i], permutation[j]);
  return out;
}

}  // namespace h2sketch
