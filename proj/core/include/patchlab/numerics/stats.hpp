#pragma once

#include <span>

#include "patchlab/numerics/rng.hpp"

namespace patchlab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr int kDefaultBootstrapResamples = 10000;

// Percentile bootstrap interval of the sample mean. Quantiles use linear
// interpolation between order statistics.
Interval bootstrap_ci(std::span<const double> samples, double level, int n_resamples, Rng& rng);

// One-sided sign test: P(X >= #positive) for X ~ Binomial(n, 1/2).
// Zero deltas are rejected; callers drop ties explicitly.
double sign_flip_pvalue(std::span<const double> deltas);

double mean(std::span<const double> xs);
// Sample standard deviation with n - 1 denominator; 0 when n == 1.
double sample_std(std::span<const double> xs);
// Linear-interpolated quantile of already sorted data.
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace patchlab
