#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "patchlab/controls/controls.hpp"
#include "patchlab/interventions/battery.hpp"

namespace patchlab {
namespace {

using test::expect_error;

const SlotMap kSlots = {{"ctrl", 0}, {"a", 1}, {"op", 2}, {"b", 3}, {"eq", 4}};

StateBank random_bank(int n, int n_addr, std::size_t width, Rng& rng) {
  StateBank bank;
  bank.iface = resid_interface({0, Site::kResidBlock, std::nullopt, {"ctrl"}});
  for (int i = 0; i < n; ++i) {
    BankEntry e{i, i, Route::kAdd, {}};
    for (int a = 0; a < n_addr; ++a) {
      Tensor v({width});
      for (auto& x : v.data()) x = rng.normal();
      e.vectors.push_back(v);
    }
    bank.entries.push_back(e);
  }
  return bank;
}

TEST(Permute, IsADerangement) {
  Rng rng(1);
  for (int n : {2, 3, 7, 20}) {
    const auto bank = random_bank(n, 1, 4, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const auto out = permute_control(bank, rng);
      std::vector<int> used;
      for (std::size_t i = 0; i < out.entries.size(); ++i) {
        EXPECT_EQ(out.entries[i].instance_id, bank.entries[i].instance_id);
        EXPECT_NE(out.entries[i].vectors, bank.entries[i].vectors);
        for (std::size_t j = 0; j < bank.entries.size(); ++j)
          if (out.entries[i].vectors == bank.entries[j].vectors) used.push_back(static_cast<int>(j));
      }
      std::sort(used.begin(), used.end());
      EXPECT_EQ(used.size(), bank.entries.size());
      EXPECT_EQ(std::unique(used.begin(), used.end()), used.end());
    }
  }
  // Two entries: the only derangement swaps them.
  const auto two = random_bank(2, 1, 3, rng);
  const auto swapped = permute_control(two, rng);
  EXPECT_EQ(swapped.entries[0].vectors, two.entries[1].vectors);
}

TEST(TokenShift, OffsetsResolveAgainstSlots) {
  const ModelConfig cfg = test::tiny_config();
  const InterventionSpec spec{{0, Site::kResidBlock, std::nullopt, {"ctrl"}}, Channels::kResid, {Tensor({8}, 1.0)},
                              WriteMode::kReplace};
  const auto same = token_shift_control(spec, 0, kSlots, cfg);
  EXPECT_EQ(resolve(same.key, same.channels, kSlots, cfg), resolve(spec.key, spec.channels, kSlots, cfg));
  EXPECT_EQ(same.source, spec.source);
  const auto next = token_shift_control(spec, 1, kSlots, cfg);
  const auto addrs = resolve(next.key, next.channels, kSlots, cfg);
  ASSERT_EQ(addrs.size(), 1u);
  EXPECT_EQ(addrs[0].position, kSlots.at("a"));
  expect_error([&] { token_shift_control(spec, -1, kSlots, cfg); }, ErrorCode::kAddress);
}

TEST(WrongInterface, LockedKeyIsIdentical) {
  const ModelConfig cfg = test::tiny_config();
  const InterfaceKey key{0, Site::kResidBlock, std::nullopt, {"ctrl"}};
  const InterventionSpec spec{key, Channels::kResid, {Tensor({8}, 2.0)}, WriteMode::kReplace};
  const auto same = wrong_interface_control(spec, key, kSlots, cfg);
  EXPECT_EQ(same.key, spec.key);
  EXPECT_EQ(same.source, spec.source);
  const auto moved = wrong_interface_control(spec, {1, Site::kResidMlp, std::nullopt, {"ctrl"}}, kSlots, cfg);
  EXPECT_EQ(moved.key.layer, 1);
  EXPECT_EQ(moved.key.site, Site::kResidMlp);
  // A d_head-wide site cannot take a d_model source.
  expect_error([&] { wrong_interface_control(spec, {0, Site::kV, std::nullopt, {"ctrl"}}, kSlots, cfg); },
               ErrorCode::kAddress);
}

TEST(RandomMatched, IdenticalBankGivesThatVector) {
  Rng rng(2);
  auto bank = random_bank(30, 1, 5, rng);
  for (auto& e : bank.entries) e.vectors = bank.entries[0].vectors;
  const auto out = random_matched_states(bank, rng);
  for (const auto& e : out.entries)
    EXPECT_LT(max_abs_diff(e.vectors[0], bank.entries[0].vectors[0]), 1e-3);
}

TEST(RandomMatched, SampleMeanWithinCltBound) {
  Rng rng(3);
  const auto bank = random_bank(40, 2, 3, rng);
  StateBank big = bank;
  big.entries.clear();
  while (big.entries.size() < 10000) {
    for (const auto& e : bank.entries) big.entries.push_back(e);
  }
  big.entries.resize(10000);
  const auto out = random_matched_states(big, rng);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t j = 0; j < 3; ++j) {
      double m = 0.0, m_bank = 0.0, var = 0.0;
      for (const auto& e : out.entries) m += e.vectors[a][j];
      m /= 10000.0;
      for (const auto& e : big.entries) m_bank += e.vectors[a][j];
      m_bank /= 10000.0;
      for (const auto& e : big.entries) var += std::pow(e.vectors[a][j] - m_bank, 2);
      var /= 9999.0;
      EXPECT_LT(std::abs(m - m_bank), 3.0 * std::sqrt(var / 10000.0)) << a << "," << j;
    }
  }
}

TEST(PseudoMix, TwoEntriesAreSwapped) {
  Rng rng(4);
  const auto bank = random_bank(2, 3, 4, rng);
  const auto out = pseudo_mix(bank, rng);
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_LT(max_abs_diff(out.entries[0].vectors[a], bank.entries[1].vectors[a]), 1e-15);
    EXPECT_LT(max_abs_diff(out.entries[1].vectors[a], bank.entries[0].vectors[a]), 1e-15);
  }
}

TEST(PseudoMix, KeepsMeansAndCenteredGram) {
  Rng rng(5);
  for (int k = 2; k <= 8; ++k) {
    const auto bank = random_bank(k, 2, 6, rng);
    const auto out = pseudo_mix(bank, rng);
    for (std::size_t a = 0; a < 2; ++a) {
      RowMatrix x(k, 6), y(k, 6);
      for (int i = 0; i < k; ++i) {
        x.row(i) = bank.entries[static_cast<std::size_t>(i)].vectors[a].vec().transpose();
        y.row(i) = out.entries[static_cast<std::size_t>(i)].vectors[a].vec().transpose();
      }
      EXPECT_LT((x.colwise().mean() - y.colwise().mean()).cwiseAbs().maxCoeff(), 1e-10);
      const RowMatrix xc = x.rowwise() - x.colwise().mean();
      const RowMatrix yc = y.rowwise() - y.colwise().mean();
      EXPECT_LT((xc.transpose() * xc - yc.transpose() * yc).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_GT((x - y).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(SwapAdjacent, TwinsUnchangedDistinctMoved) {
  Rng rng(6);
  auto bank = random_bank(4, 2, 3, rng);
  StateBank twins = bank;
  twins.entries[1].vectors = twins.entries[0].vectors;
  twins.entries[3].vectors = twins.entries[2].vectors;
  const auto same = swap_adjacent(twins);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(same.entries[i].vectors, twins.entries[i].vectors);
  const auto moved = swap_adjacent(bank);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NE(moved.entries[i].vectors[a], bank.entries[i].vectors[a]);
    EXPECT_EQ(moved.entries[i].vectors, bank.entries[i ^ 1].vectors);
  }
  bool dropped = false;
  const auto odd = swap_adjacent(random_bank(5, 1, 2, rng), &dropped);
  EXPECT_TRUE(dropped);
  EXPECT_EQ(odd.entries.size(), 4u);
}

TEST(FixedDirection, ZeroScaleIsIdentity) {
  const auto w = test::random_weights(test::tiny_config(), 7);
  Rng rng(8);
  const auto axis = random_axis(8, rng);
  EXPECT_NEAR(axis.axis.vec().norm(), 1.0, 1e-12);
  const InterfaceKey key{0, Site::kResidBlock, std::nullopt, {"b"}};
  const std::vector<int> tokens = {1, 2, 3, 4, 5};
  const std::vector<InterventionSpec> zero = {fixed_direction_steer(axis, 0.0, key)};
  EXPECT_LE(max_abs_diff(forward(w, tokens, kSlots, zero).logits, forward(w, tokens).logits), 1e-12);
  const std::vector<InterventionSpec> big = {fixed_direction_steer(axis, 5.0, key)};
  EXPECT_GT(max_abs_diff(forward(w, tokens, kSlots, big).logits, forward(w, tokens).logits), 1e-6);
}

TEST(SteeringAxis, UnitMeanDifference) {
  StateBank a, b;
  a.iface = b.iface = resid_interface({0, Site::kResidBlock, std::nullopt, {"ctrl"}});
  a.entries = {{0, 0, Route::kAdd, {Tensor::vector({3, 0})}}, {1, 1, Route::kAdd, {Tensor::vector({5, 0})}}};
  b.entries = {{2, 2, Route::kSub, {Tensor::vector({0, 0})}}};
  const auto s = steering_axis(a, b);
  EXPECT_NEAR(s.norm, 4.0, 1e-12);
  EXPECT_LT(max_abs_diff(s.axis, Tensor::vector({1, 0})), 1e-12);
}

}  // namespace
}  // namespace patchlab
