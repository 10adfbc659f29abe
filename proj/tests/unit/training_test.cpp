#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "patchlab/interventions/battery.hpp"
#include "patchlab/metrics/metrics.hpp"
#include "patchlab/metrics/reference.hpp"
#include "patchlab/training/relocation.hpp"

namespace patchlab {
namespace {

using test::expect_error;
const Vocab kVocab{10, 16};

std::vector<TaskInstance> receivers_of(Route route, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TaskInstance> out;
  for (const auto& inst : gen_routing(Family::kTriop, 3 * n, kVocab, rng))
    if (inst.role == Role::kReceiver && inst.route == route) out.push_back(inst);
  return out;
}

std::vector<RelocationCell> reference_grid() {
  std::vector<RelocationCell> cells;
  for (const auto& r : reference::kRelocation)
    cells.push_back({std::string(r.slot), r.support, r.steps, r.cost, r.acc});
  // Cheaper cells below the threshold, as a full grid would contain.
  cells.push_back({"ctrl", 8, 200, 1600, 0.80});
  cells.push_back({"b", 4, 800, 3200, 0.85});
  cells.push_back({"a", 16, 200, 3200, 0.88});
  cells.push_back({"eq", 16, 800, 12800, 0.90});
  cells.push_back({"eq", 4, 200, 800, 0.40});
  return cells;
}

TEST(Budget, CostIsSupportTimesSteps) {
  EXPECT_EQ((TrainBudget{16, 200, 3e-3}.cost()), 3200);
  EXPECT_EQ((TrainBudget{32, 800, 3e-3}.cost()), 25600);
}

TEST(TrainingExample, SupervisesAnswerPosition) {
  Rng rng(1);
  const auto inst = gen_routing(Family::kTriop, 1, kVocab, rng)[0];
  const auto ex = training_example(inst);
  ASSERT_EQ(ex.targets.size(), 1u);
  EXPECT_EQ(ex.targets[0], (std::pair<int, int>{4, inst.target[0]}));
  const auto copy = gen_copyN(3, 1, kVocab, rng)[0];
  const auto cex = training_example(copy);
  // Teacher forcing: prompt plus the first N - 1 targets.
  EXPECT_EQ(cex.tokens.size(), copy.tokens.size() + 2);
  ASSERT_EQ(cex.targets.size(), 3u);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(cex.targets[static_cast<std::size_t>(j)].second, copy.target[static_cast<std::size_t>(j)]);
}

TEST(AdamWTest, FirstStepMovesByLr) {
  Tensor p = Tensor::vector({1.0, -2.0});
  AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.0}, {&p});
  const Tensor g = Tensor::vector({0.5, -3.0});
  opt.step({&g});
  // Bias-corrected first step is lr * sign(g) up to eps.
  EXPECT_NEAR(p[0], 0.9, 1e-7);
  EXPECT_NEAR(p[1], -1.9, 1e-7);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(AdamWTest, DecoupledDecay) {
  Tensor p = Tensor::vector({2.0});
  AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.5}, {&p}, {true});
  const Tensor g = Tensor::vector({0.0});
  opt.step({&g});
  EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.1 * 0.5), 1e-12);
}

TEST(TrainBase, ShortRunIsDeterministicAndLearns) {
  const ModelConfig cfg = test::tiny_config();
  BaseTrainConfig tc;
  tc.steps = 60;
  tc.batch_size = 16;
  tc.lr = 3e-3;
  tc.checkpoint_every = 30;
  tc.log_every = 10;
  Rng a(3), b(3);
  const auto stream = routing_stream(Family::kTriop, kVocab);
  const auto x = train_base(cfg, stream, tc, a, kVocab.ctrl_neutral());
  const auto y = train_base(cfg, stream, tc, b, kVocab.ctrl_neutral());
  EXPECT_EQ(x.weights, y.weights);
  EXPECT_EQ(x.log.checkpoints, y.log.checkpoints);
  EXPECT_EQ(x.log.checkpoints.size(), 2u);
  EXPECT_LT(x.log.final_loss, x.log.initial_loss);
  EXPECT_EQ(x.log.neutral_audit_hits, 0);
  EXPECT_EQ(x.log.examples_seen, 60 * 16);
}

TEST(TrainBase, NeutralAuditRejectsLeaks) {
  const ModelConfig cfg = test::tiny_config();
  BaseTrainConfig tc;
  tc.steps = 2;
  tc.batch_size = 2;
  // A stream whose examples carry the neutral token.
  const ExampleStream leaky = [](Rng& rng) {
    Rng r = rng;
    auto inst = gen_routing(Family::kTriop, 1, kVocab, r)[1];
    return training_example(inst);
  };
  Rng rng(0);
  expect_error([&] { train_base(cfg, leaky, tc, rng, kVocab.ctrl_neutral()); }, ErrorCode::kInvalidArgument);
}

TEST(InvertControl, ZeroStepsReturnsNeutralRow) {
  const auto w = test::random_weights(test::tiny_config(), 4);
  const auto recv = receivers_of(Route::kAdd, 8, 5);
  const auto slot = invert_control(w, recv, Route::kAdd, {8, 0, 3e-3}, kVocab);
  Tensor neutral({8});
  neutral.vec() = w.tok_emb.mat().row(kVocab.ctrl_neutral()).transpose();
  EXPECT_EQ(slot.vector, neutral);
  EXPECT_TRUE(slot.replaces_token);
  // Replacing ctrl with its own row is the plain receiver run.
  const std::vector<TunableSlot> per_route = {slot};
  std::vector<int> plain;
  for (const auto& inst : recv) plain.push_back(route_readout(apply(w, inst, {}), inst));
  EXPECT_DOUBLE_EQ(tuned_route_acc(w, recv, per_route), route_acc(plain, recv));
}

TEST(InvertControl, LearnsOnSupport) {
  const auto w = test::random_weights(test::tiny_config(), 6, 20.0);
  const auto recv = receivers_of(Route::kSub, 8, 7);
  const auto before = invert_control(w, recv, Route::kSub, {8, 0, 3e-2}, kVocab);
  const auto after = invert_control(w, recv, Route::kSub, {8, 300, 3e-2}, kVocab);
  EXPECT_GE(after.support_acc, before.support_acc);
}

TEST(TuneSlot, ZeroStepsIsZeroVectorAndStepsAreReported) {
  const auto w = test::random_weights(test::tiny_config(), 8);
  const auto recv = receivers_of(Route::kCopy, 6, 9);
  Rng rng(1);
  const auto zero = tune_slot(w, "b", recv, Route::kCopy, {6, 0, 3e-3}, rng);
  for (double v : zero.vector.data()) EXPECT_EQ(v, 0.0);
  int calls = 0;
  Rng rng2(1);
  tune_slot(w, "eq", recv, Route::kCopy, {6, 5, 3e-3}, rng2, false,
            [&](int k, const TunableSlot&) { EXPECT_EQ(k, ++calls); });
  EXPECT_EQ(calls, 5);
}

TEST(TuneSlot, FrozenRandomBaseReplacesToken) {
  const auto w = test::random_weights(test::tiny_config(), 10);
  const auto recv = receivers_of(Route::kAdd, 4, 11);
  Rng rng(2);
  const auto s = tune_slot(w, "ctrl", recv, Route::kAdd, {4, 0, 3e-3}, rng, true);
  EXPECT_TRUE(s.frozen_random_base);
  EXPECT_EQ(s.base.size(), 8u);
  const auto ov = s.override_for(recv[0]);
  EXPECT_EQ(ov.position, 0);
  EXPECT_TRUE(ov.replace_token);
}

TEST(LowRank, ZeroStepsLeavesBaseMetrics) {
  const auto w = test::random_weights(test::tiny_config(), 12);
  auto support = receivers_of(Route::kAdd, 4, 13);
  const auto sub = receivers_of(Route::kSub, 4, 14);
  support.insert(support.end(), sub.begin(), sub.end());
  const auto query = receivers_of(Route::kCopy, 6, 15);
  Rng rng(3);
  const auto lr = lowrank_baseline(w, 0, 4, 1.0, support, query, {8, 0, 3e-3}, rng);
  EXPECT_EQ(lr.apply_to(w), w);
  std::vector<int> preds;
  for (const auto& inst : query) preds.push_back(route_readout(apply(w, inst, {}), inst));
  EXPECT_DOUBLE_EQ(lr.query_acc, route_acc(preds, query));
  EXPECT_EQ(lr.a.dim(1), 4u);
  EXPECT_EQ(lr.b.dim(0), 4u);
}

TEST(CostToMatch, ReferenceGridAtCompiledThreshold) {
  const auto cells = reference_grid();
  const auto costs = cost_to_match(cells, reference::kRelocationThreshold);
  const std::map<std::string, long> expected = {{"ctrl", 3200}, {"b", 3200}, {"a", 6400}, {"eq", 25600}};
  EXPECT_EQ(costs, expected);
}

TEST(CostToMatch, ThresholdExtremes) {
  const auto cells = reference_grid();
  const auto all = cost_to_match(cells, 0.0);
  EXPECT_EQ(all.at("ctrl"), 1600);
  EXPECT_EQ(all.at("eq"), 800);
  EXPECT_EQ(all.at("a"), 3200);
  EXPECT_TRUE(cost_to_match(cells, 1.01).empty());
}

TEST(RelocationFindingTest, ReferenceGridShowsBarrierAtEq) {
  RelocationGrid grid;
  grid.cells = reference_grid();
  grid.compiled_acc = reference::kRelocationThreshold;
  const auto f = relocation_finding(grid, reference::kRelocationThreshold);
  ASSERT_TRUE(f.ctrl_cost.has_value());
  EXPECT_EQ(*f.ctrl_cost, 3200);
  EXPECT_TRUE(f.barrier);
  EXPECT_EQ(f.barrier_slots, std::vector<std::string>{"eq"});
  EXPECT_FALSE(f.statement.empty());
}

TEST(RelocationCsv, CompiledRowFirstAtCostZero) {
  RelocationGrid grid;
  grid.cells = reference_grid();
  grid.compiled_acc = 0.95;
  const auto csv = relocation_csv(grid, "# meta");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# meta");
  std::getline(in, line);
  EXPECT_EQ(line, "slot,support,steps,cost,acc");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("compiled,0,0,0,", 0), 0u);
}

TEST(RelocationGridTest, EmptyGridIsAnError) {
  const auto w = test::random_weights(test::tiny_config(), 16);
  const auto pool = receivers_of(Route::kAdd, 4, 17);
  RelocationGridConfig cfg;
  cfg.slots.clear();
  Rng rng(0);
  expect_error([&] { relocation_grid(w, pool, pool, cfg, 0.5, rng); }, ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace patchlab
