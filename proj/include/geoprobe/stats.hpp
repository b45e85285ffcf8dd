#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace geoprobe::stats {

struct TauResult {
  double tau = 0.0;
  double p_value = 1.0;  ///< two-sided, normal approximation
  std::size_t n_pairs = 0;
};

struct ZTestResult {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1)
  std::size_t n = 0;
  double z = 0.0;
  double p_one_sided = 1.0;  ///< upper tail
  double p_two_sided = 1.0;
};

/// Kendall tau-a: (concordant - discordant) / C(n, 2). Pairs tied in either input
/// count as neither but stay in the denominator. O(n log n).
TauResult kendall_tau(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average-ranked data. Throws DegenerateInput on zero rank variance.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Throws DegenerateInput when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// z = mean / (s / sqrt(n)). Throws TooFewSamples for n < 2, DegenerateInput for s = 0.
ZTestResult z_test_mean_positive(std::span<const double> samples);

double normal_cdf(double z);

}  // namespace geoprobe::stats
