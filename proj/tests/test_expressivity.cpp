#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "memcap/error.hpp"
#include "memcap/expressivity.hpp"
#include "memcap/rng.hpp"
#include "support.hpp"

namespace memcap {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

double relu(double v) { return std::max(v, 0.0); }

TEST(Lemma, WorkedInstance) {
  // x = (1, 2), b = (0.5, 1.5): A = [[0.5, 0], [1.5, 0.5]], y = (3, -1) -> w = (6, -20).
  const auto rep = lemma_matrix_props(vec({1.0, 2.0}), vec({0.5, 1.5}));
  EXPECT_TRUE(rep.full_rank);
  EXPECT_DOUBLE_EQ(rep.min_eigenvalue, 0.5);
  EXPECT_DOUBLE_EQ(rep.matrix.A(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(rep.matrix.A(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(rep.matrix.A(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(rep.matrix.A(1, 1), 0.5);
  const Vector w = forward_substitute(rep.matrix.A, vec({3.0, -1.0}));
  EXPECT_DOUBLE_EQ(w(0), 6.0);
  EXPECT_DOUBLE_EQ(w(1), -20.0);
}

TEST(Lemma, RejectsBrokenInterleaving) {
  EXPECT_THROW(lemma_matrix_props(vec({1.0, 2.0}), vec({1.0, 1.5})), ValidationError);
  EXPECT_THROW(lemma_matrix_props(vec({1.0, 2.0}), vec({0.5, 2.5})), ValidationError);
  EXPECT_THROW(lemma_matrix_props(vec({1.0}), vec({0.5, 1.5})), ValidationError);
}

TEST(Lemma, LowerTriangularAndEigenvaluesMatchDenseOracle) {
  Rng rng(3);
  // Triangular non-normal matrices are hard for a general eigensolver, so keep n small.
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(8));
    Vector x(n), b(n);
    double cursor = rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) {
      b(i) = cursor + 0.01 + rng.uniform();
      x(i) = b(i) + 0.01 + rng.uniform();
      cursor = x(i);
    }
    const auto rep = lemma_matrix_props(x, b);
    ASSERT_TRUE(rep.full_rank);
    EXPECT_TRUE(rep.matrix.A.isLowerTriangular());
    Eigen::EigenSolver<ColMatrix> es(rep.matrix.A);
    EXPECT_NEAR(es.eigenvalues().real().minCoeff(), rep.min_eigenvalue, 1e-9);
    EXPECT_EQ(rep.min_eigenvalue, (x - b).minCoeff());
  }
}

TEST(ForwardSubstitute, MatchesDenseSolver) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(40));
    ColMatrix L = testing::gaussian(n, n, 100 + static_cast<std::uint64_t>(t)).triangularView<Eigen::Lower>();
    L.diagonal().array() = L.diagonal().array().abs() + 1.0;
    const Vector y = testing::gaussian_vec(n, 200 + static_cast<std::uint64_t>(t));
    const Vector oracle = L.fullPivLu().solve(y);
    EXPECT_LE((forward_substitute(L, y) - oracle).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + oracle.cwiseAbs().maxCoeff()));
  }
  ColMatrix singular = ColMatrix::Identity(2, 2);
  singular(1, 1) = 0.0;
  EXPECT_THROW(forward_substitute(singular, vec({1.0, 1.0})), NumericError);
}

TEST(Depth2, ExactOnRandomSamples) {
  Rng rng(5);
  for (int t = 0; t < 25; ++t) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(256));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(32));
    const Matrix X = testing::gaussian(n, d, 300 + static_cast<std::uint64_t>(t));
    const Vector y = testing::gaussian_vec(n, 400 + static_cast<std::uint64_t>(t));
    const auto net = construct_depth2(X, y, static_cast<std::uint64_t>(t));
    EXPECT_EQ(net.weight_count(), static_cast<std::size_t>(d + 2 * n));
    EXPECT_NEAR(net.a.norm(), 1.0, 1e-12);
    const auto r = fit_residual(net, X, y);
    EXPECT_LE(r.max_rel, 1e-8) << "n=" << n << " d=" << d;
    // Breakpoints interleave the sorted projections.
    std::vector<double> proj(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) proj[static_cast<std::size_t>(i)] = net.a.dot(X.row(i).transpose());
    std::sort(proj.begin(), proj.end());
    for (Eigen::Index i = 0; i < n; ++i) {
      EXPECT_LT(net.b(i), proj[static_cast<std::size_t>(i)]);
      if (i > 0) {
        EXPECT_GT(net.b(i), proj[static_cast<std::size_t>(i - 1)]);
      }
    }
  }
}

TEST(Depth2, ZeroTargetsGiveZeroWeights) {
  const Matrix X = testing::gaussian(30, 4, 6);
  const auto net = construct_depth2(X, Vector::Zero(30), 1);
  EXPECT_EQ(net.w.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Depth2, PiecewiseAffineWithDeadZone) {
  const Matrix X = testing::gaussian(20, 3, 7);
  const Vector y = testing::gaussian_vec(20, 8);
  const auto net = construct_depth2(X, y, 2);
  const Vector a = net.a;
  // Below the first breakpoint every unit is off.
  EXPECT_EQ(eval_interpolator(net, a * (net.b(0) - 0.5)), 0.0);
  // Between adjacent breakpoints the output is affine along a: midpoint rule is exact.
  for (Eigen::Index j = 0; j + 1 < net.b.size(); ++j) {
    const double lo = net.b(j) + 1e-3 * (net.b(j + 1) - net.b(j));
    const double hi = net.b(j + 1) - 1e-3 * (net.b(j + 1) - net.b(j));
    const double f_lo = eval_interpolator(net, a * lo);
    const double f_hi = eval_interpolator(net, a * hi);
    const double f_mid = eval_interpolator(net, a * (0.5 * (lo + hi)));
    EXPECT_NEAR(f_mid, 0.5 * (f_lo + f_hi), 1e-9 * (1.0 + std::abs(f_lo) + std::abs(f_hi)));
  }
  // Directions orthogonal to a do not change the output.
  Vector orth = testing::gaussian_vec(3, 9);
  orth -= orth.dot(a) * a;
  const Vector z = X.row(4).transpose();
  EXPECT_NEAR(eval_interpolator(net, z + orth), eval_interpolator(net, z), 1e-9 * (1.0 + std::abs(y(4))));
}

TEST(Depth2, MatchesHandFormula) {
  const Matrix X = testing::gaussian(6, 2, 10);
  const Vector y = testing::gaussian_vec(6, 11);
  const auto net = construct_depth2(X, y, 3);
  const Vector z = testing::gaussian_vec(2, 12);
  double direct = 0.0;
  for (Eigen::Index j = 0; j < 6; ++j) direct += net.w(j) * relu(net.a.dot(z) - net.b(j));
  EXPECT_DOUBLE_EQ(eval_interpolator(net, z), direct);
}

TEST(Depth2, RejectsDuplicatesAndShapeErrors) {
  Matrix X = testing::gaussian(5, 3, 13);
  X.row(3) = X.row(1);
  EXPECT_THROW(construct_depth2(X, Vector::Zero(5), 0), ValidationError);
  EXPECT_THROW(construct_depth2(testing::gaussian(5, 3, 13), Vector::Zero(4), 0), ValidationError);
  // Two distinct rows that every direction maps to nearly the same projection.
  Matrix close(2, 1);
  close << 1.0, 1.0 + 1e-300;
  EXPECT_THROW(construct_depth2(close, Vector::Zero(2), 0), ValidationError);
}

TEST(Depth2, JsonRoundTrip) {
  const Matrix X = testing::gaussian(12, 5, 14);
  const Vector y = testing::gaussian_vec(12, 15);
  const auto net = construct_depth2(X, y, 4);
  const auto back = InterpolatorNet::from_json(net.to_json());
  EXPECT_EQ(back.a, net.a);
  EXPECT_EQ(back.b, net.b);
  EXPECT_EQ(back.w, net.w);
  EXPECT_EQ(back.sort_order, net.sort_order);
  EXPECT_THROW(InterpolatorNet::from_json("{\"a\": 1}"), ValidationError);
}

TEST(TrapezoidGate, ShapeAndSupport) {
  const TrapezoidGate g{0.0, 1.0, 2.0, 4.0};
  EXPECT_DOUBLE_EQ(g(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(g(0.5), 0.5);
  EXPECT_DOUBLE_EQ(g(1.0), 1.0);
  EXPECT_DOUBLE_EQ(g(1.7), 1.0);
  EXPECT_DOUBLE_EQ(g(3.0), 0.5);
  EXPECT_DOUBLE_EQ(g(5.0), 0.0);
}

TEST(DepthK, TwoLayersReproduceDepth2) {
  const Matrix X = testing::gaussian(40, 6, 16);
  const Vector y = testing::gaussian_vec(40, 17);
  const auto shallow = construct_depth2(X, y, 5);
  const auto layered = construct_depth_k(X, y, 2, 5);
  ASSERT_EQ(layered.blocks.size(), 1u);
  EXPECT_EQ(layered.a, shallow.a);
  for (int t = 0; t < 50; ++t) {
    const Vector z = testing::gaussian_vec(6, 500 + static_cast<std::uint64_t>(t));
    const double tz = (layered.a.dot(z) - layered.shift) / layered.scale;
    const double expect = eval_interpolator(shallow, z);
    EXPECT_NEAR(eval_block(layered.blocks[0], tz), expect, 1e-9 * (1.0 + std::abs(expect)));
  }
}

TEST(DepthK, ExactWithinWidthAndWeightBounds) {
  Rng rng(18);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.below(200);
    const std::size_t d = 1 + rng.below(32);
    const Matrix X = testing::gaussian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), 600 + static_cast<std::uint64_t>(t));
    const Vector y = testing::gaussian_vec(static_cast<Eigen::Index>(n), 700 + static_cast<std::uint64_t>(t));
    for (std::size_t k : {std::size_t{2}, std::size_t{3}, std::size_t{5}, n}) {
      if (k > n) continue;
      const auto net = construct_depth_k(X, y, k, static_cast<std::uint64_t>(t));
      EXPECT_EQ(net.layer_widths().size(), k);
      EXPECT_LE(static_cast<double>(net.max_width()),
                LayeredInterpolator::kWidthConstant * static_cast<double>(n) / static_cast<double>(k));
      EXPECT_EQ(net.weight_count(), d + 2 * n + 8 * (k - 1) + 3);
      EXPECT_LE(static_cast<double>(net.weight_count()),
                LayeredInterpolator::kWeightConstant * static_cast<double>(n + d));
      EXPECT_LE(fit_residual(net, X, y).max_rel, 1e-8) << "n=" << n << " d=" << d << " k=" << k;
    }
  }
}

TEST(DepthK, DepthRange) {
  const Matrix X = testing::gaussian(4, 2, 19);
  const Vector y = testing::gaussian_vec(4, 20);
  EXPECT_THROW(construct_depth_k(X, y, 1, 0), ValidationError);
  EXPECT_THROW(construct_depth_k(X, y, 6, 0), ValidationError);
  const auto widest_split = construct_depth_k(X, y, 5, 0);
  EXPECT_LE(fit_residual(widest_split, X, y).max_rel, 1e-9);
}

TEST(DepthK, JsonRoundTripPreservesOutputs) {
  const Matrix X = testing::gaussian(30, 4, 21);
  const Vector y = testing::gaussian_vec(30, 22);
  const auto net = construct_depth_k(X, y, 4, 6);
  const auto back = LayeredInterpolator::from_json(net.to_json());
  EXPECT_EQ(back.weight_count(), net.weight_count());
  for (Eigen::Index i = 0; i < 30; ++i) {
    EXPECT_EQ(eval_interpolator(back, X.row(i).transpose()), eval_interpolator(net, X.row(i).transpose()));
  }
}

}  // namespace
}  // namespace memcap
