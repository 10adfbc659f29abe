#include "patchlab/numerics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "patchlab/error.hpp"

namespace patchlab {

double mean(std::span<const double> xs) {
  require(!xs.empty(), ErrorCode::kInvalidArgument, "mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  require(!xs.empty(), ErrorCode::kInvalidArgument, "std of empty sample");
  if (xs.size() == 1) return 0.0;
  const double mu = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double sorted_quantile(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorCode::kInvalidArgument, "quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const double> samples, double level, int n_resamples, Rng& rng) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "bootstrap_ci: empty samples");
  require(level > 0.0 && level < 1.0, ErrorCode::kInvalidArgument, "bootstrap_ci: level must be in (0, 1)");
  require(n_resamples >= 1, ErrorCode::kInvalidArgument, "bootstrap_ci: need at least one resample");

  const std::size_t n = samples.size();
  std::vector<double> means(static_cast<std::size_t>(n_resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += samples[rng.uniform_index(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - level;
  return {sorted_quantile(means, alpha / 2.0), sorted_quantile(means, 1.0 - alpha / 2.0)};
}

double sign_flip_pvalue(std::span<const double> deltas) {
  require(!deltas.empty(), ErrorCode::kInvalidArgument, "sign_flip_pvalue: empty deltas");
  int n = 0;
  int positive = 0;
  for (double d : deltas) {
    require(d != 0.0, ErrorCode::kInvalidArgument, "sign_flip_pvalue: zero delta present");
    require(std::isfinite(d), ErrorCode::kNumericDomain, "sign_flip_pvalue: non-finite delta");
    ++n;
    if (d > 0.0) ++positive;
  }
  // Sum C(n, i) 2^-n from the smallest term upward; the all-positive tail is
  // the single exact term 2^-n.
  std::vector<double> binom(static_cast<std::size_t>(n) + 1);
  binom[0] = 1.0;
  for (int i = 1; i <= n / 2; ++i) binom[i] = binom[i - 1] * static_cast<double>(n - i + 1) / i;
  for (int i = n / 2 + 1; i <= n; ++i) binom[i] = binom[n - i];
  double p = 0.0;
  for (int i = n; i >= positive; --i) p += std::ldexp(binom[i], -n);
  return std::min(p, 1.0);
}

}  // namespace patchlab
