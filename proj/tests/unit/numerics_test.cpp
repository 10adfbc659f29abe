#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "patchlab/numerics/finite_diff.hpp"
#include "patchlab/numerics/hash.hpp"
#include "patchlab/numerics/linalg.hpp"
#include "patchlab/numerics/stats.hpp"

namespace patchlab {
namespace {

using test::expect_error;

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor m({rows, cols});
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

TEST(TruncatedSvd, FullRankIdentityIsReproduced) {
  const auto out = truncated_svd(Tensor::identity(2), 2);
  EXPECT_LT(max_abs_diff(out.approximation, Tensor::identity(2)), 1e-14);
  EXPECT_EQ(out.achieved_rank, 2);
}

TEST(TruncatedSvd, RankZeroIsZero) {
  Rng rng(3);
  const Tensor m = random_matrix(3, 5, rng);
  const auto out = truncated_svd(m, 0);
  EXPECT_EQ(out.achieved_rank, 0);
  for (double v : out.approximation.data()) EXPECT_EQ(v, 0.0);
}

TEST(TruncatedSvd, DiagonalRankOneKeepsLargestEntry) {
  const auto out = truncated_svd(Tensor::matrix({{3, 0}, {0, 1}}), 1);
  EXPECT_LT(max_abs_diff(out.approximation, Tensor::matrix({{3, 0}, {0, 0}})), 1e-12);
  EXPECT_EQ(out.achieved_rank, 1);
}

TEST(TruncatedSvd, DiagonalRankOneMatchesBruteForce) {
  // Rank-1 candidates s * u v^T over a fine grid of unit vectors and scales.
  const Tensor m = Tensor::matrix({{3, 0}, {0, 1}});
  double best = 1e300;
  for (int i = 0; i < 360; ++i) {
    const double tu = M_PI * i / 360.0;
    for (int j = 0; j < 360; ++j) {
      const double tv = M_PI * j / 360.0;
      const double u[2] = {std::cos(tu), std::sin(tu)};
      const double v[2] = {std::cos(tv), std::sin(tv)};
      // Optimal scale for fixed u, v is u^T m v.
      double s = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) s += u[a] * m.at(a, b) * v[b];
      double err = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) err += std::pow(m.at(a, b) - s * u[a] * v[b], 2);
      best = std::min(best, err);
    }
  }
  const auto out = truncated_svd(m, 1);
  Tensor diff = m;
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= out.approximation[i];
  EXPECT_NEAR(std::pow(frobenius_norm(diff), 2), best, 1e-9);
}

TEST(TruncatedSvd, CapsAtNumericalRank) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {2, 4, 6}});
  const auto out = truncated_svd(m, 2);
  EXPECT_EQ(out.achieved_rank, 1);
  EXPECT_LT(max_abs_diff(out.approximation, m), 1e-12);
}

TEST(TruncatedSvd, NonFiniteInputIsRejected) {
  Tensor m = Tensor::identity(2);
  m[1] = std::nan("");
  expect_error([&] { truncated_svd(m, 1); }, ErrorCode::kNumericDomain);
}

TEST(TruncatedSvd, BeatsRandomFactorizations) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor m = random_matrix(4, 4, rng);
    for (int r = 1; r <= 3; ++r) {
      const auto out = truncated_svd(m, r);
      Tensor diff = m;
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= out.approximation[i];
      const double err = frobenius_norm(diff);
      for (int c = 0; c < 100; ++c) {
        const Tensor a = random_matrix(4, static_cast<std::size_t>(r), rng);
        const Tensor b = random_matrix(static_cast<std::size_t>(r), 4, rng);
        const RowMatrix approx = a.mat() * b.mat();
        EXPECT_LE(err, (m.mat() - approx).norm() + 1e-12);
      }
    }
  }
}

TEST(OrthogonalMixer, TwoByTwoIsTheSwap) {
  // Enumerate the orthogonal maps of the 1-D complement of ones: +1 and -1.
  const double b[2] = {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
  std::vector<RowMatrix> candidates;
  for (double s : {1.0, -1.0}) {
    RowMatrix q(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) q(i, j) = 0.5 + s * b[i] * b[j];
    if ((q - RowMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() > 1e-6) candidates.push_back(q);
  }
  ASSERT_EQ(candidates.size(), 1u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor q = random_orthogonal_fixing_ones(2, rng);
    EXPECT_LT((q.mat() - candidates[0]).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(q.values(), (std::vector<double>{0, 1, 1, 0}));
  }
}

TEST(OrthogonalMixer, ThreeByThreeInvariants) {
  Rng rng(5);
  const Tensor q = random_orthogonal_fixing_ones(3, rng);
  const RowMatrix qq = q.mat().transpose() * q.mat();
  EXPECT_LT((qq - RowMatrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
  EXPECT_LT((q.mat() * ones - ones).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GT((q.mat() - RowMatrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(OrthogonalMixer, DeterministicForSeed) {
  Rng a(42), b(42);
  EXPECT_EQ(random_orthogonal_fixing_ones(4, a), random_orthogonal_fixing_ones(4, b));
}

TEST(OrthogonalMixer, KOneIsRejected) {
  Rng rng(0);
  expect_error([&] { random_orthogonal_fixing_ones(1, rng); }, ErrorCode::kInvalidArgument);
}

TEST(OrthogonalMixer, PreservesMeansAndCenteredGram) {
  Rng rng(9);
  for (int k = 2; k <= 8; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor x = random_matrix(static_cast<std::size_t>(k), 5, rng);
      const Tensor q = random_orthogonal_fixing_ones(k, rng);
      const RowMatrix qx = q.mat() * x.mat();
      EXPECT_LT((qx.colwise().mean() - x.mat().colwise().mean()).cwiseAbs().maxCoeff(), 1e-10);
      const RowMatrix xc = x.mat().rowwise() - x.mat().colwise().mean();
      const RowMatrix qc = qx.rowwise() - qx.colwise().mean();
      EXPECT_LT((qc.transpose() * qc - xc.transpose() * xc).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

// Independent percentile bootstrap: its own engine, its own quantile rule.
std::pair<double, double> reference_bootstrap(const std::vector<double>& xs, double level, int n) {
  std::mt19937_64 gen(987654321);
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::vector<double> means;
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[pick(gen)];
    means.push_back(s / static_cast<double>(xs.size()));
  }
  std::sort(means.begin(), means.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double alpha = 1.0 - level;
  return {at(alpha / 2), at(1 - alpha / 2)};
}

TEST(Bootstrap, ConstantSamplesGiveDegenerateInterval) {
  Rng rng(1);
  const std::vector<double> xs = {0.5, 0.5, 0.5};
  const auto ci = bootstrap_ci(xs, 0.95, 1000, rng);
  EXPECT_EQ(ci.lo, 0.5);
  EXPECT_EQ(ci.hi, 0.5);
}

TEST(Bootstrap, ContainsTheMean) {
  Rng rng(2);
  const std::vector<double> xs = {0.0, 1.0};
  const auto ci = bootstrap_ci(xs, 0.95, 10000, rng);
  EXPECT_LE(ci.lo, 0.5);
  EXPECT_GE(ci.hi, 0.5);
}

TEST(Bootstrap, MatchesIndependentImplementation) {
  Rng rng(3);
  const std::vector<double> xs = {0.91, 0.92, 0.90, 0.93, 0.91};
  const auto ci = bootstrap_ci(xs, 0.95, 10000, rng);
  const auto [lo, hi] = reference_bootstrap(xs, 0.95, 10000);
  EXPECT_NEAR(ci.lo, lo, 0.005);
  EXPECT_NEAR(ci.hi, hi, 0.005);
}

TEST(Bootstrap, DeterministicAndRejectsEmpty) {
  const std::vector<double> xs = {0.1, 0.4, 0.3};
  Rng a(8), b(8);
  const auto x = bootstrap_ci(xs, 0.9, 500, a);
  const auto y = bootstrap_ci(xs, 0.9, 500, b);
  EXPECT_EQ(x.lo, y.lo);
  EXPECT_EQ(x.hi, y.hi);
  Rng rng(0);
  expect_error([&] { bootstrap_ci(std::vector<double>{}, 0.95, 10, rng); }, ErrorCode::kInvalidArgument);
}

TEST(SignFlip, AllPositiveIsTwoToTheMinusN) {
  const std::vector<double> deltas(82, 0.1);
  EXPECT_EQ(sign_flip_pvalue(deltas), std::ldexp(1.0, -82));
  EXPECT_NEAR(sign_flip_pvalue(deltas), 2.07e-25, 0.01e-25);
}

TEST(SignFlip, SmallCases) {
  EXPECT_DOUBLE_EQ(sign_flip_pvalue(std::vector<double>{1.0, -1.0}), 0.75);
  EXPECT_DOUBLE_EQ(sign_flip_pvalue(std::vector<double>{1.0}), 0.5);
  EXPECT_DOUBLE_EQ(sign_flip_pvalue(std::vector<double>{-1.0, -2.0}), 1.0);
}

TEST(SignFlip, MatchesBinomialTail) {
  // P(X >= 7), X ~ Bin(10, 1/2) = (120 + 45 + 10 + 1) / 1024.
  std::vector<double> d(10, 1.0);
  for (int i = 0; i < 3; ++i) d[i] = -1.0;
  EXPECT_DOUBLE_EQ(sign_flip_pvalue(d), 176.0 / 1024.0);
}

TEST(SignFlip, ZeroDeltaIsRejected) {
  expect_error([] { sign_flip_pvalue(std::vector<double>{1.0, 0.0}); }, ErrorCode::kInvalidArgument);
}

TEST(FiniteDiff, SumHasUnitGradient) {
  Rng rng(4);
  const Tensor x = random_matrix(3, 3, rng);
  const Tensor g = finite_diff_grad([](const Tensor& t) {
    double s = 0;
    for (double v : t.data()) s += v;
    return s;
  }, x, 1e-5);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-8);
}

TEST(FiniteDiff, SquareAtThree) {
  const Tensor g = finite_diff_grad([](const Tensor& t) { return t[0] * t[0]; }, Tensor::vector({3.0}), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, NonFiniteValueIsRejected) {
  expect_error([] { finite_diff_grad([](const Tensor& t) { return std::log(t[0]); }, Tensor::vector({0.0}), 1e-5); },
               ErrorCode::kNumericDomain);
}

TEST(RngTest, SameSeedSameDraws) {
  Rng a(17, 3), b(17, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngTest, SplitStreamsAreDistinct) {
  const auto streams = Rng(5).split(16);
  std::set<std::uint64_t> ids;
  for (const auto& s : streams) ids.insert(s.stream());
  EXPECT_EQ(ids.size(), streams.size());
  auto a = streams[0];
  auto b = streams[1];
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Stats, MeanAndStd) {
  const std::vector<double> xs = {0.79, 0.81};
  EXPECT_NEAR(mean(xs), 0.80, 1e-15);
  EXPECT_NEAR(sample_std(xs), std::sqrt(2.0) * 0.01, 1e-12);
  EXPECT_EQ(sample_std(std::vector<double>{0.8}), 0.0);
}

TEST(Hash, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace patchlab
