#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "geoprobe/error.hpp"
#include "geoprobe/stats.hpp"

using namespace geoprobe;

namespace {

double brute_tau(const std::vector<double>& x, const std::vector<double>& y) {
  long s = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = x[i] - x[j], b = y[i] - y[j];
      s += (a > 0) - (a < 0) == 0 || (b > 0) - (b < 0) == 0 ? 0 : ((a > 0) == (b > 0) ? 1 : -1);
    }
  return static_cast<double>(s) / (static_cast<double>(n * (n - 1)) / 2.0);
}

}  // namespace

TEST(KendallTau, Examples) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_EQ(stats::kendall_tau(x, std::vector<double>{1, 2, 3}).tau, 1.0);
  EXPECT_EQ(stats::kendall_tau(x, std::vector<double>{3, 2, 1}).tau, -1.0);
  const auto r = stats::kendall_tau(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4});
  EXPECT_DOUBLE_EQ(r.tau, 4.0 / 6.0);
  EXPECT_EQ(r.n_pairs, 6u);
}

TEST(KendallTau, PValueUsesNormalApproximation) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7}, y{2, 1, 4, 3, 7, 5, 6};
  const auto r = stats::kendall_tau(x, y);
  const double n = 7;
  const double z = 3 * r.tau * std::sqrt(n * (n - 1)) / std::sqrt(2 * (2 * n + 5));
  EXPECT_NEAR(r.p_value, std::erfc(std::abs(z) / std::sqrt(2.0)), 1e-12);
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
}

TEST(KendallTau, TiesStayInDenominator) {
  const auto r = stats::kendall_tau(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(r.tau, 2.0 / 3.0);
}

TEST(KendallTau, TooFewSamples) {
  EXPECT_THROW(stats::kendall_tau(std::vector<double>{1}, std::vector<double>{1}), TooFewSamples);
  EXPECT_THROW(stats::kendall_tau(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
}

TEST(KendallTau, MatchesBruteForceOnPermutationsAndTies) {
  std::mt19937_64 rng(99);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> x(n), y(n);
    std::iota(x.begin(), x.end(), 0.0);
    std::iota(y.begin(), y.end(), 0.0);
    std::shuffle(x.begin(), x.end(), rng);
    std::shuffle(y.begin(), y.end(), rng);
    if (c % 4 == 0)
      for (auto& v : y) v = std::floor(v / 3);
    EXPECT_EQ(stats::kendall_tau(x, y).tau, brute_tau(x, y)) << "case " << c;
  }
}

TEST(Spearman, Examples) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(stats::spearman_rho(x, x), 1.0);
  EXPECT_DOUBLE_EQ(stats::spearman_rho(x, std::vector<double>{9, 5, 2, -1}), -1.0);
  // ranks equal the values; deviations (-1.5,-.5,.5,1.5) and (-.5,-1.5,1.5,.5): 3 / 5
  EXPECT_DOUBLE_EQ(stats::spearman_rho(x, std::vector<double>{2, 1, 4, 3}), 0.6);
}

TEST(Spearman, AverageRanksForTies) {
  EXPECT_EQ(stats::average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Spearman, ZeroRankVariance) {
  EXPECT_THROW(stats::spearman_rho(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInput);
}

TEST(RankStatistics, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(20), y(20), fx(20), fy(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = g(rng);
      y[i] = x[i] + g(rng);
      fx[i] = std::exp(x[i]);
      fy[i] = y[i] * y[i] * y[i] + 5;
    }
    EXPECT_DOUBLE_EQ(stats::kendall_tau(x, y).tau, stats::kendall_tau(fx, fy).tau);
    EXPECT_NEAR(stats::spearman_rho(x, y), stats::spearman_rho(fx, fy), 1e-12);
  }
}

TEST(ZTest, Example) {
  const auto r = stats::z_test_mean_positive(std::vector<double>{1, 1, 1, -1});
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
  EXPECT_DOUBLE_EQ(r.std, 1.0);
  EXPECT_EQ(r.n, 4u);
  EXPECT_DOUBLE_EQ(r.z, 1.0);
  EXPECT_NEAR(r.p_one_sided, 0.15865525393145707, 1e-12);
  EXPECT_NEAR(r.p_two_sided, 2 * 0.15865525393145707, 1e-12);
}

TEST(ZTest, Guards) {
  EXPECT_THROW(stats::z_test_mean_positive(std::vector<double>{0.5, 0.5, 0.5}), DegenerateInput);
  EXPECT_THROW(stats::z_test_mean_positive(std::vector<double>{0.5}), TooFewSamples);
}

TEST(ZTest, PValueShrinksWithSampleSize) {
  double last = 1.0;
  for (int n = 2; n <= 64; n *= 2) {
    std::vector<double> s;
    for (int i = 0; i < n; ++i) s.push_back(i % 2 ? 2.0 : 0.0);
    const double p = stats::z_test_mean_positive(s).p_one_sided;
    EXPECT_LT(p, last);
    last = p;
  }
}

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(stats::normal_cdf(0.0), 0.5);
  EXPECT_NEAR(stats::normal_cdf(1.959963984540054), 0.975, 1e-12);
}

TEST(Pearson, ZeroVariance) {
  EXPECT_THROW(stats::pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}), DegenerateInput);
}
