#include <gtest/gtest.h>

#include <numbers>

#include "h2sketch/bench.hpp"
#include "h2sketch/kernels.hpp"
#include "oracles.hpp"

using namespace h2sketch;

namespace {

std::vector<Index> iota(Index b, Index e) {
  std::vector<Index> v;
  for (Index i = b; i < e; ++i) v.push_back(i);
  return v;
}

}  // namespace

TEST(Kernel, Examples) {
  const std::vector<double> x{0.1, 0.2, 0.3}, y{0.1, 0.2, 0.5};
  const KernelSpec cov = ExponentialCovariance{0.2};
  const KernelSpec ie = HelmholtzIE{3.0};
  EXPECT_EQ(eval_entry(cov, x, x), 1.0);
  EXPECT_NEAR(eval_entry(cov, x, y), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(eval_kernel_at_distance(cov, 0.2), 0.36787944117144233, 1e-15);
  EXPECT_NEAR(eval_kernel_at_distance(ie, std::numbers::pi / 3), -3.0 / std::numbers::pi, 1e-14);
  EXPECT_EQ(eval_entry(ie, x, x), 0.0);
  EXPECT_EQ(eval_entry(ie, x, y), eval_entry(ie, y, x));
  EXPECT_THROW(validate(ExponentialCovariance{0.0}), std::invalid_argument);
  EXPECT_THROW(validate(HelmholtzIE{-1.0}), std::invalid_argument);
  EXPECT_THROW(validate(HelmholtzIE{INFINITY}), std::invalid_argument);
}

TEST(Kernel, EvaluatorMatchesScalarOracle) {
  const auto pts = generate_points(300, 3, PointMode::random, 4);
  const auto rows = iota(0, 300);
  for (int kind = 0; kind < 2; ++kind) {
    const KernelSpec spec = kind == 0 ? KernelSpec{ExponentialCovariance{0.2}} : KernelSpec{HelmholtzIE{3.0}};
    const oracle::Matrix ref = kind == 0 ? oracle::cov_matrix(pts) : oracle::ie_matrix(pts);
    KernelEvaluator ev(pts, spec);
    Matrix out(300, 300);
    ev.eval_block(rows, rows, out);
    const oracle::Matrix scale = ref.cwiseAbs().cwiseMax(1.0);
    EXPECT_LE((out - ref).cwiseAbs().cwiseQuotient(scale).maxCoeff(), 1e-14);
    EXPECT_LE((dense_kernel_matrix(pts, spec) - ref).cwiseAbs().cwiseQuotient(scale).maxCoeff(), 1e-14);
    // Evaluator symmetric and consistent with itself.
    EXPECT_EQ((out - out.transpose()).cwiseAbs().maxCoeff(), 0.0);
    if (kind == 0) {
      EXPECT_GT(out.minCoeff(), 0.0);
      EXPECT_LE(out.maxCoeff(), 1.0);
      for (Index i = 0; i < 300; ++i) EXPECT_EQ(out(i, i), 1.0);
    }
  }
}

TEST(Kernel, GenerateBlocks) {
  const auto pts = generate_points(512, 3, PointMode::random, 2);
  const auto t = build_cluster_tree(pts, 64);
  const auto mt = build_matrix_tree(t, 0.7);
  const auto ordered = pts.permuted(t.permutation());
  KernelEvaluator ev(ordered, ExponentialCovariance{0.2});

  EXPECT_TRUE(generate_blocks(ev, {}).empty());
  const Index zero = 0;
  const BlockRequest one{{&zero, 1}, {&zero, 1}};
  EXPECT_EQ(generate_blocks(ev, {&one, 1})[0](0, 0), 1.0);

  const oracle::Matrix ref = oracle::cov_matrix(ordered);
  std::vector<BlockRequest> req;
  for (Index s = t.level_begin(1); s < t.level_end(1); ++s)
    for (Index u : mt.near(s)) req.push_back({t.indices(s), t.indices(u)});
  ASSERT_FALSE(req.empty());
  const auto blocks = generate_blocks(ev, req);
  ASSERT_EQ(blocks.size(), req.size());
  for (std::size_t q = 0; q < req.size(); ++q) {
    const auto& r = req[q];
    const oracle::Matrix sub =
        ref.block(r.rows.front(), r.cols.front(), static_cast<Index>(r.rows.size()), static_cast<Index>(r.cols.size()));
    EXPECT_LE((blocks[q] - sub).cwiseAbs().maxCoeff(), 1e-14);
  }

  const Index bad = 512;
  std::vector<BlockRequest> bad_req{one, {{&zero, 1}, {&bad, 1}}};
  try {
    generate_blocks(ev, bad_req);
    FAIL() << "expected out_of_range";
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("request 1"), std::string::npos);
  }
}

TEST(Kernel, SamplersMatchDenseProduct) {
  for (Index n : {Index{1}, Index{255}, Index{700}}) {
    const auto pts = generate_points(n, 2, PointMode::random, 6);
    const oracle::Matrix ref = oracle::ie_matrix(pts);
    const oracle::Matrix x = oracle::gaussian(n, 5, 1);
    KernelSampler ks(pts, HelmholtzIE{3.0});
    const Matrix y = ks.apply(x);
    EXPECT_LE((y - ref * x).norm(), 1e-12 * (ref * x).norm() + 1e-300);
    DenseMatrixSampler ds(std::make_shared<const Matrix>(ref));
    EXPECT_LE((ds.apply(x) - ref * x).norm(), 1e-12 * (ref * x).norm() + 1e-300);
    EXPECT_THROW(ks.apply(Matrix::Zero(n + 1, 1)), std::invalid_argument);
  }
}

TEST(Kernel, DenseEvaluatorAndReorder) {
  const oracle::Matrix a = oracle::gaussian(6, 6, 3);
  const std::vector<Index> perm{3, 1, 5, 0, 2, 4};
  const Matrix t = to_tree_order(a, perm);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) EXPECT_EQ(t(i, j), a(perm[i], perm[j]));
  DenseMatrixEvaluator ev(std::make_shared<const Matrix>(a));
  const std::vector<Index> r{4, 0}, c{5, 2, 2};
  Matrix out(2, 3);
  ev.eval_block(r, c, out);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(out(i, j), a(r[i], c[j]));
  EXPECT_THROW(DenseMatrixEvaluator(std::make_shared<const Matrix>(Matrix::Zero(2, 3))), std::invalid_argument);
}

TEST(Kernel, BatchMatchesScalarEntry) {
  const auto pts = generate_points(200, 3, PointMode::random, 12);
  const auto idx = iota(0, 200);
  for (const KernelSpec spec : {KernelSpec{ExponentialCovariance{0.2}}, KernelSpec{HelmholtzIE{3.0}}}) {
    KernelEvaluator ev(pts, spec);
    Matrix out(200, 200);
    ev.eval_block(idx, idx, out);
    Index mismatches = 0;
    for (Index j = 0; j < 200; ++j)
      for (Index i = 0; i < 200; ++i)
        if (out(i, j) != eval_entry(spec, pts.point(i), pts.point(j))) ++mismatches;
    EXPECT_EQ(mismatches, 0);
  }
}
