#include <gtest/gtest.h>

#include <cmath>

#include "../common/grad_check.hpp"
#include "fixtures.hpp"
#include "patchlab/model/checkpoint.hpp"
#include "patchlab/model/transformer.hpp"
#include "patchlab/numerics/stats.hpp"

namespace patchlab {
namespace {

using test::expect_error;

const std::vector<int> kTokens = {3, 7, 1, 12, 5, 9};
const SlotMap kSlots = {{"ctrl", 0}, {"a", 1}, {"op", 2}, {"b", 3}, {"eq", 4}};

double row_diff(const Tensor& a, const Tensor& b, std::size_t rows) {
  double m = 0.0;
  const std::size_t cols = a.dim(1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, std::abs(a.at(r, c) - b.at(r, c)));
  return m;
}

TEST(Init, DeterministicForSeed) {
  const auto cfg = test::tiny_config();
  Rng a(7), b(7);
  EXPECT_EQ(init_model(cfg, a), init_model(cfg, b));
}

TEST(Init, RejectsInconsistentHeads) {
  auto cfg = test::tiny_config();
  cfg.d_model = 9;
  Rng rng(0);
  expect_error([&] { init_model(cfg, rng); }, ErrorCode::kInvalidArgument);
}

TEST(Init, DefaultConfigStatistics) {
  Rng rng(1);
  const Weights w = init_model(ModelConfig{}, rng);
  EXPECT_TRUE(all_finite(w));
  const double s = sample_std(w.tok_emb.data());
  EXPECT_GE(s, 0.015);
  EXPECT_LE(s, 0.025);
  for (double b : w.layers[0].b_q.data()) EXPECT_EQ(b, 0.0);
  for (double g : w.lnf_gain.data()) EXPECT_EQ(g, 1.0);
}

TEST(Forward, EmptyInterventionIsIdentity) {
  const auto w = test::random_weights(test::tiny_config(), 2);
  const auto plain = forward(w, kTokens);
  const auto with_slots = forward(w, kTokens, kSlots, {});
  EXPECT_EQ(plain.logits, with_slots.logits);
  EXPECT_EQ(plain.logits.dim(0), kTokens.size());
  EXPECT_EQ(plain.logits.dim(1), 33u);
}

class SelfPatch : public ::testing::TestWithParam<std::pair<Site, Channels>> {};

TEST_P(SelfPatch, ChangesNoLogit) {
  const auto [site, channels] = GetParam();
  const auto w = test::random_weights(test::tiny_config(), 3);
  for (int layer = 0; layer < 2; ++layer) {
    InterfaceKey key{layer, site, std::nullopt, {"ctrl", "b", "eq"}};
    const std::vector<Probe> probes = {{key, channels}};
    const auto a = forward(w, kTokens, kSlots, {}, probes);
    InterventionSpec spec{key, channels, {}, WriteMode::kReplace};
    for (const auto& addr : resolve(key, channels, kSlots, w.config)) spec.source.push_back(a.cache.at(addr));
    const std::vector<InterventionSpec> specs = {spec};
    const auto b = forward(w, kTokens, kSlots, specs);
    EXPECT_LE(max_abs_diff(a.logits, b.logits), 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Sites, SelfPatch,
                         ::testing::Values(std::pair{Site::kResidBlock, Channels::kResid},
                                           std::pair{Site::kResidAttn, Channels::kResid},
                                           std::pair{Site::kResidMlp, Channels::kResid},
                                           std::pair{Site::kK, Channels::kKV},
                                           std::pair{Site::kQ, Channels::kQKV}));

TEST(Forward, CaptureCountsPerSite) {
  const auto w = test::random_weights(test::tiny_config(), 4);
  const InterfaceKey resid{0, Site::kResidBlock, std::nullopt, {"ctrl"}};
  const InterfaceKey k{0, Site::kK, std::nullopt, {"ctrl"}};
  const std::vector<Probe> probes = {{resid, Channels::kResid}, {k, Channels::kKOnly}};
  const auto out = forward(w, kTokens, kSlots, {}, probes);
  ASSERT_EQ(out.cache.size(), 1u + 2u);
  EXPECT_EQ(out.cache.at(Address{0, Site::kResidBlock, -1, 0}).size(), 8u);
  EXPECT_EQ(out.cache.at(Address{0, Site::kK, 1, 0}).size(), 4u);
}

TEST(Forward, CausalInTokensAndInterventions) {
  const auto w = test::random_weights(test::tiny_config(), 5);
  const auto base = forward(w, kTokens, kSlots);
  for (std::size_t p = 0; p + 1 < kTokens.size(); ++p) {
    auto changed = kTokens;
    for (std::size_t q = p + 1; q < changed.size(); ++q) changed[q] = (changed[q] + 11) % 33;
    const auto out = forward(w, changed, kSlots);
    EXPECT_LE(row_diff(base.logits, out.logits, p + 1), 1e-12) << "position " << p;
  }
  // A write at b (position 3) leaves rows 0..2 untouched and moves row 3.
  const InterfaceKey key{0, Site::kResidBlock, std::nullopt, {"b"}};
  const std::vector<InterventionSpec> specs = {{key, Channels::kResid, {Tensor({8}, 3.0)}, WriteMode::kReplace}};
  const auto patched = forward(w, kTokens, kSlots, specs);
  EXPECT_LE(row_diff(base.logits, patched.logits, 3), 1e-12);
  EXPECT_GT(max_abs_diff(base.logits, patched.logits), 1e-6);
}

TEST(Forward, OverlappingWritesConflict) {
  const auto w = test::random_weights(test::tiny_config(), 6);
  const InterfaceKey key{0, Site::kV, std::vector<int>{0}, {"a"}};
  const InterventionSpec s{key, Channels::kVOnly, {Tensor({4}, 1.0)}, WriteMode::kReplace};
  const std::vector<InterventionSpec> specs = {s, s};
  expect_error([&] { forward(w, kTokens, kSlots, specs); }, ErrorCode::kConflict);
}

TEST(Forward, UnknownSlotIsAnAddressError) {
  const auto w = test::random_weights(test::tiny_config(), 6);
  const InterfaceKey key{0, Site::kResidBlock, std::nullopt, {"payload_9"}};
  const std::vector<InterventionSpec> specs = {{key, Channels::kResid, {Tensor({8})}, WriteMode::kReplace}};
  expect_error([&] { forward(w, kTokens, kSlots, specs); }, ErrorCode::kAddress);
}

TEST(Forward, BatchMatchesSingle) {
  const auto w = test::random_weights(test::tiny_config(), 8);
  std::vector<SequenceRequest> reqs = {{kTokens, kSlots, {}, {}}, {{1, 2, 3}, {}, {}, {}}, {{4, 4, 4, 4, 4, 4}, kSlots, {}, {}}};
  const auto out = forward_batch(w, reqs);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_LE(max_abs_diff(out[i].logits, forward(w, reqs[i].tokens).logits), 1e-12);
  }
}

TEST(Loss, UniformLogitsGiveLogVocab) {
  ModelConfig cfg = test::tiny_config(8);
  const Weights w = zero_weights(cfg);
  const std::vector<TrainExample> batch = {{{1, 2, 3}, {{2, 5}}, {}}};
  EXPECT_NEAR(batch_loss(w, batch), std::log(8.0), 1e-12);
  EXPECT_NEAR(std::log(8.0), 2.0794, 1e-4);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 104; ++seed) {
    const auto stats = test::check_model_gradients(seed);
    EXPECT_GE(stats.fraction(), 0.99) << "seed " << seed;
    EXPECT_LT(stats.worst, 1e-2) << "seed " << seed;
  }
}

TEST(Loss, OverrideGradientsMatchFiniteDifferences) {
  const auto w = test::random_weights(test::tiny_config(), 9, 20.0);
  TrainExample ex{kTokens, {{4, 2}, {5, 7}}, {}};
  Tensor v({8});
  Rng rng(1);
  for (auto& x : v.data()) x = 0.5 * rng.normal();
  ex.overrides.push_back({0, v, true});
  std::vector<TrainExample> batch = {ex};
  const auto lg = loss_and_grad(w, batch, {});
  const Tensor numeric = finite_diff_grad(
      [&](const Tensor& x) {
        batch[0].overrides[0].vector = x;
        return batch_loss(w, batch);
      },
      v, 1e-5);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LT(test::rel_error(lg.override_grads[0][0][i], numeric[i]), 1e-4);
}

TEST(Loss, MaskLimitsGradients) {
  const auto w = test::random_weights(test::tiny_config(), 10);
  const std::vector<TrainExample> batch = {{kTokens, {{5, 3}}, {}}};
  const auto lg = loss_and_grad(w, batch, {"tok_emb", "pos_emb"});
  for_each_parameter(lg.grads, [&](const std::string& name, const Tensor& t) {
    const double norm = frobenius_norm(t);
    if (name == "tok_emb" || name == "pos_emb") {
      EXPECT_GT(norm, 0.0) << name;
    } else {
      EXPECT_EQ(norm, 0.0) << name;
    }
  });
}

TEST(Generate, OneStepIsForwardArgmax) {
  const auto w = test::random_weights(test::tiny_config(), 11);
  const auto out = generate(w, kTokens, 1);
  ASSERT_EQ(out.size(), 1u);
  const auto logits = forward(w, kTokens).logits;
  EXPECT_EQ(out[0], argmax_row(logits, kTokens.size() - 1));
}

TEST(Generate, GreedyAndDeterministic) {
  const auto w = test::random_weights(test::tiny_config(), 12);
  const auto a = generate(w, kTokens, 4);
  EXPECT_EQ(a, generate(w, kTokens, 4));
  // Teacher-forced check of every step.
  auto seq = kTokens;
  for (int t : a) {
    EXPECT_EQ(t, argmax_row(forward(w, seq).logits, seq.size() - 1));
    seq.push_back(t);
  }
  std::vector<GenerationRequest> reqs = {{kTokens, {}, {}}, {{1, 2}, {}, {}}};
  const auto batched = generate_batch(w, reqs, 4);
  EXPECT_EQ(batched[0], a);
  EXPECT_EQ(batched[1], generate(w, std::vector<int>{1, 2}, 4));
}

TEST(Generate, PromptInterventionsPersist) {
  const auto w = test::random_weights(test::tiny_config(), 13);
  const InterfaceKey key{0, Site::kK, std::nullopt, {"a"}};
  std::vector<Tensor> src(2, Tensor({4}, 2.0));
  const std::vector<InterventionSpec> specs = {{key, Channels::kKOnly, src, WriteMode::kReplace}};
  const auto out = generate(w, kTokens, 3, kSlots, specs);
  auto seq = kTokens;
  for (int t : out) {
    EXPECT_EQ(t, argmax_row(forward(w, seq, kSlots, specs).logits, seq.size() - 1));
    seq.push_back(t);
  }
}

TEST(Generate, ContextOverflowIsCapacityError) {
  const auto w = test::random_weights(test::tiny_config(), 14);
  expect_error([&] { generate(w, kTokens, 11); }, ErrorCode::kCapacity);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto w = test::random_weights(test::tiny_config(), 15);
  const auto back = checkpoint_from_json(checkpoint_to_json(w));
  EXPECT_EQ(back, w);
  EXPECT_EQ(weights_digest(back), weights_digest(w));
}

}  // namespace
}  // namespace patchlab
