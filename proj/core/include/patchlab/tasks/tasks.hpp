#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/model/interface.hpp"
#include "patchlab/numerics/rng.hpp"
#include "patchlab/tasks/vocab.hpp"

namespace patchlab {

enum class Family { kAddSub, kTriop, kCopyN };
enum class Role { kDonor, kReceiver };
enum class Route { kAdd, kSub, kCopy, kNone };

std::string_view to_string(Family f);
std::string_view to_string(Role r);
std::string_view to_string(Route r);
Family parse_family(std::string_view text);
Role parse_role(std::string_view text);
Route parse_route(std::string_view text);

// Routes of a routing family, in label order.
std::vector<Route> family_routes(Family f);
int route_answer(Route route, int a, int b, int modulus);
int ctrl_token(Route route, const Vocab& vocab);

struct TaskInstance {
  int id = 0;
  // Donor and receiver of one pair share pair_id; routing pairs built from the
  // same operands share group_id (one pair per route).
  int pair_id = 0;
  int group_id = 0;
  Family family = Family::kTriop;
  Role role = Role::kDonor;
  std::vector<int> tokens;
  SlotMap slots;
  Route route = Route::kNone;
  // Routing: the single answer token. CopyN: the payload continuation.
  std::vector<int> target;
  // Routing: answer under each family route, in family_routes() order.
  std::vector<int> route_answers;
  std::vector<std::string> corrupted;

  int answer_position() const { return static_cast<int>(tokens.size()) - 1; }
};

// Operand b values whose add / sub / copy answers are pairwise distinct.
std::vector<int> identifiable_operands(Family family, int modulus);

// Donor/receiver pairs over prompts [ctrl, a, op, b, eq]. Pairs come in
// groups that share (a, b), one pair per route, so a receiver group (NEUTRAL
// ctrl, identical tokens) carries every route label once. Instances are
// ordered donor, receiver per pair; ids count from first_id.
std::vector<TaskInstance> gen_routing(Family family, int n_pairs, const Vocab& vocab, Rng& rng, int first_id = 0);

// Prompts [ctrl_seq, payload_1..payload_N, eq] whose target is the payload.
std::vector<TaskInstance> gen_copyN(int n, int count, const Vocab& vocab, Rng& rng, int max_positions = 32,
                                    int first_id = 0);

// Resamples each named payload/operand slot to a different token of the same
// sub-vocabulary. The label is unchanged and the slot names are recorded.
TaskInstance corrupt(const TaskInstance& instance, std::span<const std::string> slots, const Vocab& vocab,
                     Rng& rng);

// Default fixed-corrupt slots: the last two payload slots (or all when N < 2).
std::vector<std::string> default_corrupt_slots(int n);

struct SplitPlan {
  std::vector<int> support;  // instance ids
  std::vector<int> query;
  std::uint64_t seed = 0;
  std::string support_hash;
  std::string query_hash;
};

// Disjoint support/query split over instance ids, stratified by route.
// Groups are visited in shuffled order, so with n_support a multiple of the
// route count the support takes whole operand groups. Pass donors only and
// map pairs with pair_ids() to keep receivers on the donor's side.
SplitPlan make_split(std::span<const TaskInstance> instances, int n_support, Rng& rng);

std::string hash_ids(std::span<const int> ids);

// Ids of every instance (any role) whose pair_id matches one of `donor_ids`.
std::vector<int> pair_ids(std::span<const TaskInstance> instances, std::span<const int> donor_ids);

// Instances whose ids appear in `ids`, in the order of `ids`.
std::vector<TaskInstance> select(std::span<const TaskInstance> instances, std::span<const int> ids);
std::vector<TaskInstance> with_role(std::span<const TaskInstance> instances, Role role);

}  // namespace patchlab
