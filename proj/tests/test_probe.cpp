#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "memcap/error.hpp"
#include "memcap/probe.hpp"
#include "support.hpp"

namespace memcap {
namespace {

TEST(Spearman, KnownValues) {
  const std::vector<double> up{1, 2, 3, 4, 5};
  const std::vector<double> sq{1, 4, 9, 16, 25};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman_rho(up, sq), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(up, down), -1.0);
  // Textbook IQ / hours-of-TV example: rho = -29/165.
  const std::vector<double> iq{106, 86, 100, 101, 99, 103, 97, 113, 112, 110};
  const std::vector<double> tv{7, 0, 27, 50, 28, 29, 20, 12, 6, 17};
  EXPECT_NEAR(spearman_rho(iq, tv), -29.0 / 165.0, 1e-12);
  // Ties get average ranks: y ranks (1, 2.5, 2.5, 4).
  const std::vector<double> tied{1, 2, 2, 3};
  const double expect = (1 * -1.5 + 2.5 * -0.5 + 2.5 * 0.5 + 4 * 1.5 - 0.0) /
                        std::sqrt(5.0 * (2.25 + 0 + 0 + 2.25));
  EXPECT_NEAR(spearman_rho(std::vector<double>{1, 2, 3, 4}, tied), expect, 1e-12);
  EXPECT_THROW(spearman_rho(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
  EXPECT_DOUBLE_EQ(spearman_rho(up, std::vector<double>(5, 1.0)), 0.0);
}

// E|sum of n Rademacher signs| / n via the binomial distribution.
double expected_abs_mean(int n) {
  double total = 0.0;
  double log_half_n = n * std::log(0.5);
  for (int k = 0; k <= n; ++k) {
    const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    total += std::exp(log_binom + log_half_n) * std::abs(2 * k - n);
  }
  return total / n;
}

TEST(Rademacher, ConstantFamilyMatchesBinomialExpectation) {
  const Matrix X = Matrix::Zero(64, 1);
  const auto est = rademacher_estimate(X, constant_family_fitter(), 4000, 5, "constant");
  EXPECT_EQ(est.correlations.size(), 4000u);
  EXPECT_NEAR(est.mean, expected_abs_mean(64), 4.0 * est.std_error);
  for (double c : est.correlations) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Rademacher, PerTrialIsAbsoluteMeanOfSigns) {
  const Matrix X = Matrix::Zero(9, 2);
  std::vector<double> seen;
  SignFitter recording = [&](const Matrix& in, std::span<const int> sigma, std::size_t trial) {
    const long sum = std::accumulate(sigma.begin(), sigma.end(), 0L);
    seen.push_back(std::abs(static_cast<double>(sum)) / 9.0);
    return constant_family_fitter()(in, sigma, trial);
  };
  const auto est = rademacher_estimate(X, recording, 50, 6, "constant");
  EXPECT_EQ(est.correlations, seen);
}

TEST(Rademacher, PerfectFitterAndSingleSample) {
  SignFitter perfect = [](const Matrix&, std::span<const int> sigma, std::size_t) {
    return std::vector<double>(sigma.begin(), sigma.end());
  };
  const auto est = rademacher_estimate(testing::gaussian(30, 2, 1), perfect, 10, 0, "oracle");
  EXPECT_DOUBLE_EQ(est.mean, 1.0);
  EXPECT_DOUBLE_EQ(est.std_error, 0.0);
  const auto one = rademacher_estimate(Matrix::Zero(1, 1), constant_family_fitter(), 20, 0, "constant");
  EXPECT_DOUBLE_EQ(one.mean, 1.0);
}

TEST(Rademacher, ZeroPredictionCountsAsPlusOne) {
  SignFitter zero = [](const Matrix& in, std::span<const int>, std::size_t) {
    return std::vector<double>(static_cast<std::size_t>(in.rows()), 0.0);
  };
  std::vector<double> sums;
  SignFitter plus = [&](const Matrix& in, std::span<const int> sigma, std::size_t) {
    sums.push_back(std::accumulate(sigma.begin(), sigma.end(), 0.0) / static_cast<double>(sigma.size()));
    return std::vector<double>(static_cast<std::size_t>(in.rows()), 1.0);
  };
  const Matrix X = Matrix::Zero(11, 1);
  EXPECT_EQ(rademacher_estimate(X, zero, 5, 2, "z").correlations, rademacher_estimate(X, plus, 5, 2, "p").correlations);
  EXPECT_EQ(rademacher_estimate(X, zero, 5, 2, "z").correlations, sums);
}

TEST(Rademacher, Validation) {
  EXPECT_THROW(rademacher_estimate(Matrix::Zero(3, 1), constant_family_fitter(), 0, 0, "c"), ValidationError);
  SignFitter short_fit = [](const Matrix&, std::span<const int>, std::size_t) { return std::vector<double>{1.0}; };
  EXPECT_THROW(rademacher_estimate(Matrix::Zero(3, 1), short_fit, 1, 0, "c"), ValidationError);
  const Dataset ds = synth_blobs(20, 4, 2, 3.0, 1);
  MlpSpec spec;
  spec.input_dim = 4;
  spec.hidden_widths = {8};
  spec.num_classes = 3;
  EXPECT_THROW(rademacher_estimate(ds, spec, TrainConfig{}, 1), ValidationError);
}

TEST(Rademacher, WideNetFitsSmallSample) {
  const Dataset ds = synth_blobs(16, 8, 2, 1.0, 3);
  MlpSpec spec;
  spec.input_dim = 8;
  spec.hidden_widths = {128};
  spec.num_classes = 1;
  TrainConfig cfg;
  cfg.initial_lr = 0.05;
  cfg.lr_decay_per_epoch = 1.0;
  cfg.batch_size = 16;
  cfg.max_epochs = 2000;
  cfg.fit_threshold = 1.0;
  const auto est = rademacher_estimate(ds, spec, cfg, 5);
  EXPECT_DOUBLE_EQ(est.mean, 1.0);
  EXPECT_TRUE(est.lower_bound);
}

struct SweepFixture : ::testing::Test {
  Dataset train = synth_blobs(120, 6, 3, 5.0, 10);
  Dataset test = synth_blobs(60, 6, 3, 5.0, 11);
  MlpSpec spec;
  TrainConfig cfg;

  void SetUp() override {
    spec.input_dim = 6;
    spec.hidden_widths = {32};
    spec.num_classes = 3;
    cfg.initial_lr = 0.05;
    cfg.lr_decay_per_epoch = 1.0;
    cfg.batch_size = 16;
    cfg.max_epochs = 400;
  }
};

TEST_F(SweepFixture, GridOrderAndRelativeConvergence) {
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds{0, 1};
  std::size_t callbacks = 0;
  SweepOptions opt;
  opt.on_cell = [&](const SweepRow&) { ++callbacks; };
  const auto rep = corruption_sweep(train, test, spec, cfg, grid, seeds, opt);
  ASSERT_EQ(rep.rows.size(), 6u);
  EXPECT_EQ(callbacks, 6u);
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t s = 0; s < 2; ++s) {
      const auto& row = rep.rows[g * 2 + s];
      EXPECT_EQ(row.p, grid[g]);
      EXPECT_EQ(row.seed, seeds[s]);
      EXPECT_EQ(row.fit, row.steps_to_fit.has_value());
      EXPECT_NEAR(row.effective_flip_rate, grid[g] * 2.0 / 3.0, 1e-15);
    }
  }
  for (std::size_t s = 0; s < 2; ++s) {
    ASSERT_TRUE(rep.rows[s].fit);
    EXPECT_EQ(*rep.rows[s].rel_convergence, 1.0);
    EXPECT_LT(rep.rows[s].test_err, 0.1) << "clean separable blobs generalize";
  }
  const auto means = rep.mean_steps_by_p();
  ASSERT_EQ(means.size(), 3u);
  EXPECT_EQ(means[0], 0.5 * static_cast<double>(*rep.rows[0].steps_to_fit + *rep.rows[1].steps_to_fit));
  EXPECT_GT(rep.mean_test_err_by_p()[2], rep.mean_test_err_by_p()[0]);
}

TEST_F(SweepFixture, ThreadCountDoesNotChangeResults) {
  const std::vector<double> grid{0.0, 0.3};
  const std::vector<std::uint64_t> seeds{4, 5};
  SweepOptions serial, parallel;
  parallel.jobs = 3;
  const auto a = corruption_sweep(train, test, spec, cfg, grid, seeds, serial);
  const auto b = corruption_sweep(train, test, spec, cfg, grid, seeds, parallel);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].steps_to_fit, b.rows[i].steps_to_fit);
    EXPECT_EQ(a.rows[i].test_err, b.rows[i].test_err);
    EXPECT_EQ(a.rows[i].train_acc, b.rows[i].train_acc);
  }
}

TEST_F(SweepFixture, RejectsBadGrids) {
  const std::vector<std::uint64_t> seeds{0};
  EXPECT_THROW(corruption_sweep(train, test, spec, cfg, std::vector<double>{}, seeds), ValidationError);
  EXPECT_THROW(corruption_sweep(train, test, spec, cfg, std::vector<double>{0.5, 0.0}, seeds), ValidationError);
  EXPECT_THROW(corruption_sweep(train, test, spec, cfg, std::vector<double>{0.2, 0.5}, seeds), ValidationError);
  EXPECT_THROW(corruption_sweep(train, test, spec, cfg, std::vector<double>{0.0, 1.5}, seeds), ValidationError);
  EXPECT_THROW(corruption_sweep(train, test, spec, cfg, std::vector<double>{0.0}, std::vector<std::uint64_t>{}),
               ValidationError);
}

}  // namespace
}  // namespace memcap
