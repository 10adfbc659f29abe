#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "patchlab/metrics/metrics.hpp"
#include "patchlab/model/transformer.hpp"
#include "patchlab/tasks/instance_io.hpp"

namespace patchlab {
namespace {

using test::expect_error;
const Vocab kVocab{10, 16};

TEST(Routing, TriopAnswersAtThreeOne) {
  // Modular arithmetic by hand: 3 + 1, 3 - 1, copy 3.
  EXPECT_EQ(route_answer(Route::kAdd, 3, 1, 10), 4);
  EXPECT_EQ(route_answer(Route::kSub, 3, 1, 10), 2);
  EXPECT_EQ(route_answer(Route::kCopy, 3, 1, 10), 3);
  EXPECT_EQ(route_answer(Route::kSub, 1, 3, 10), 8);
  const auto ok = identifiable_operands(Family::kTriop, 10);
  EXPECT_NE(std::find(ok.begin(), ok.end(), 1), ok.end());
}

TEST(Routing, AddSubCollisionNeverGenerated) {
  // b = 0 and b = 5 make add and sub agree mod 10.
  const auto ok = identifiable_operands(Family::kAddSub, 10);
  EXPECT_EQ(std::count(ok.begin(), ok.end(), 0), 0);
  EXPECT_EQ(std::count(ok.begin(), ok.end(), 5), 0);
  Rng rng(1);
  for (const auto& inst : gen_routing(Family::kAddSub, 200, kVocab, rng)) {
    const int b = inst.tokens[3];
    EXPECT_NE(b, 0);
    EXPECT_NE(b, 5);
  }
}

TEST(Routing, AnswersPairwiseDistinctAndRolesAligned) {
  for (Family f : {Family::kAddSub, Family::kTriop}) {
    Rng rng(2);
    const auto insts = gen_routing(f, 120, kVocab, rng);
    ASSERT_EQ(insts.size(), 240u);
    std::map<int, std::set<Route>> group_routes;
    for (std::size_t i = 0; i < insts.size(); i += 2) {
      const auto& d = insts[i];
      const auto& r = insts[i + 1];
      EXPECT_EQ(d.role, Role::kDonor);
      EXPECT_EQ(r.role, Role::kReceiver);
      EXPECT_EQ(d.pair_id, r.pair_id);
      ASSERT_EQ(d.tokens.size(), 5u);
      EXPECT_EQ(d.tokens[0], ctrl_token(d.route, kVocab));
      EXPECT_EQ(r.tokens[0], kVocab.ctrl_neutral());
      for (std::size_t p = 1; p < 5; ++p) EXPECT_EQ(d.tokens[p], r.tokens[p]);
      const std::set<int> distinct(d.route_answers.begin(), d.route_answers.end());
      EXPECT_EQ(distinct.size(), family_routes(f).size());
      const int a = d.tokens[1], b = d.tokens[3];
      EXPECT_EQ(d.target.at(0), route_answer(d.route, a, b, 10));
      group_routes[d.group_id].insert(d.route);
    }
    for (const auto& [g, routes] : group_routes) EXPECT_EQ(routes.size(), family_routes(f).size());
  }
}

TEST(Routing, DeterministicForSeed) {
  Rng a(5), b(5);
  const auto x = gen_routing(Family::kTriop, 100, kVocab, a);
  const auto y = gen_routing(Family::kTriop, 100, kVocab, b);
  EXPECT_EQ(dump_instances(x), dump_instances(y));
}

TEST(Routing, SmallModulusIsRejected) {
  Rng rng(0);
  expect_error([&] { gen_routing(Family::kTriop, 3, Vocab{4, 16}, rng); }, ErrorCode::kInvalidArgument);
}

TEST(CopyN, LayoutAndTarget) {
  Rng rng(3);
  const auto two = gen_copyN(2, 10, kVocab, rng);
  for (const auto& inst : two) {
    ASSERT_EQ(inst.tokens.size(), 4u);
    EXPECT_EQ(inst.tokens[0], kVocab.ctrl_seq());
    EXPECT_EQ(inst.tokens[3], kVocab.eq());
    EXPECT_EQ(inst.target, (std::vector<int>{inst.tokens[1], inst.tokens[2]}));
    for (int t : inst.target) EXPECT_TRUE(kVocab.is_payload(t));
  }
  const auto ten = gen_copyN(10, 3, kVocab, rng);
  EXPECT_EQ(ten[0].tokens.size(), 12u);
  EXPECT_EQ(ten[0].target.size(), 10u);
}

TEST(CopyN, ContextBudgetIsEnforced) {
  Rng rng(0);
  expect_error([&] { gen_copyN(13, 1, kVocab, rng); }, ErrorCode::kCapacity);
  expect_error([&] { gen_copyN(10, 1, kVocab, rng, 16); }, ErrorCode::kCapacity);
}

TEST(CopyN, ChanceTokenAccuracy) {
  Rng rng(4);
  const auto insts = gen_copyN(3, 500, kVocab, rng);
  std::vector<Rollout> targets, guesses;
  Rng guess(99);
  for (const auto& inst : insts) {
    targets.push_back(inst.target);
    Rollout g;
    for (std::size_t i = 0; i < inst.target.size(); ++i) g.push_back(kVocab.payload(guess.uniform_int(0, 15)));
    guesses.push_back(g);
  }
  EXPECT_NEAR(gen_tok_acc_full(guesses, targets), 1.0 / 16.0, 0.02);

  // An untrained model cannot beat the uniform guesser.
  Rng init(5);
  const Weights w = init_model(ModelConfig{}, init);
  std::vector<Rollout> rolled;
  for (const auto& inst : insts) rolled.push_back(generate(w, inst.tokens, 3));
  EXPECT_LE(gen_tok_acc_full(rolled, targets), 1.0 / 16.0 + 0.02);
}

TEST(Corrupt, ChangesOnlyNamedSlots) {
  Rng rng(6);
  const auto inst = gen_copyN(5, 1, kVocab, rng)[0];
  const std::vector<std::string> slots = {"payload_3"};
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = corrupt(inst, slots, kVocab, rng);
    for (std::size_t p = 0; p < inst.tokens.size(); ++p) {
      if (p == 3) {
        EXPECT_NE(c.tokens[p], inst.tokens[p]);
        EXPECT_TRUE(kVocab.is_payload(c.tokens[p]));
      } else {
        EXPECT_EQ(c.tokens[p], inst.tokens[p]);
      }
    }
    EXPECT_EQ(c.target, inst.target);
    EXPECT_EQ(c.corrupted, slots);
    EXPECT_EQ(corrupt_only_indices(c), std::vector<int>{2});
  }
}

TEST(Corrupt, EmptyListAndStructureSlots) {
  Rng rng(7);
  const auto inst = gen_copyN(3, 1, kVocab, rng)[0];
  const auto same = corrupt(inst, {}, kVocab, rng);
  EXPECT_EQ(same.tokens, inst.tokens);
  EXPECT_TRUE(same.corrupted.empty());
  const std::vector<std::string> ctrl = {"ctrl"};
  const std::vector<std::string> eq = {"eq"};
  expect_error([&] { corrupt(inst, ctrl, kVocab, rng); }, ErrorCode::kInvalidArgument);
  expect_error([&] { corrupt(inst, eq, kVocab, rng); }, ErrorCode::kInvalidArgument);
  EXPECT_EQ(default_corrupt_slots(5), (std::vector<std::string>{"payload_4", "payload_5"}));
  EXPECT_EQ(default_corrupt_slots(1), (std::vector<std::string>{"payload_1"}));
}

TEST(Split, SizesAndDisjointness) {
  Rng rng(8);
  const auto donors = with_role(gen_routing(Family::kTriop, 100, kVocab, rng), Role::kDonor);
  Rng srng(1);
  const auto plan = make_split(donors, 16, srng);
  EXPECT_EQ(plan.support.size(), 16u);
  EXPECT_EQ(plan.query.size(), 84u);
  const std::set<int> s(plan.support.begin(), plan.support.end());
  for (int id : plan.query) EXPECT_FALSE(s.contains(id));
  EXPECT_NE(plan.support_hash, plan.query_hash);
}

TEST(Split, StratifiedByRoute) {
  Rng rng(9);
  const auto donors = with_role(gen_routing(Family::kTriop, 60, kVocab, rng), Role::kDonor);
  Rng srng(2);
  const auto plan = make_split(donors, 9, srng);
  std::map<Route, int> counts;
  for (const auto& inst : select(donors, plan.support)) ++counts[inst.route];
  EXPECT_EQ(counts[Route::kAdd], 3);
  EXPECT_EQ(counts[Route::kSub], 3);
  EXPECT_EQ(counts[Route::kCopy], 3);
}

TEST(Split, DeterministicAndBounded) {
  Rng rng(10);
  const auto donors = with_role(gen_routing(Family::kTriop, 30, kVocab, rng), Role::kDonor);
  Rng a(3), b(3);
  const auto x = make_split(donors, 12, a);
  const auto y = make_split(donors, 12, b);
  EXPECT_EQ(x.support, y.support);
  EXPECT_EQ(x.query_hash, y.query_hash);
  Rng c(0);
  expect_error([&] { make_split(donors, 30, c); }, ErrorCode::kInvalidArgument);
}

TEST(InstanceIo, RoundTripKeepsFieldOrder) {
  Rng rng(11);
  auto insts = gen_routing(Family::kTriop, 3, kVocab, rng);
  const std::vector<std::string> b = {"b"};
  insts[0] = corrupt(insts[0], b, kVocab, rng);
  const auto text = dump_instances(insts);
  EXPECT_EQ(dump_instances(parse_instances(text)), text);
  const auto line = instance_to_line(insts[0]);
  EXPECT_EQ(line.rfind("{\"id\":", 0), 0u);
  EXPECT_LT(line.find("\"tokens\""), line.find("\"slot_map\""));
  EXPECT_LT(line.find("\"route_answers\""), line.find("\"corrupted\""));
}

}  // namespace
}  // namespace patchlab
