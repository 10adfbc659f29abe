#include "patchlab/tasks/tasks.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "patchlab/error.hpp"
#include "patchlab/numerics/hash.hpp"

namespace patchlab {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::kAddSub: return "ADDSUB";
    case Family::kTriop: return "TRIOP";
    case Family::kCopyN: return "COPYN";
  }
  return "?";
}

std::string_view to_string(Role r) { return r == Role::kDonor ? "DONOR" : "RECEIVER"; }

std::string_view to_string(Route r) {
  switch (r) {
    case Route::kAdd: return "add";
    case Route::kSub: return "sub";
    case Route::kCopy: return "copy";
    case Route::kNone: return "none";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  for (auto f : {Family::kAddSub, Family::kTriop, Family::kCopyN}) {
    if (text == to_string(f)) return f;
  }
  fail(ErrorCode::kInvalidArgument, "unknown task family '" + std::string(text) + "'");
}

Role parse_role(std::string_view text) {
  if (text == "DONOR") return Role::kDonor;
  if (text == "RECEIVER") return Role::kReceiver;
  fail(ErrorCode::kInvalidArgument, "unknown role '" + std::string(text) + "'");
}

Route parse_route(std::string_view text) {
  for (auto r : {Route::kAdd, Route::kSub, Route::kCopy, Route::kNone}) {
    if (text == to_string(r)) return r;
  }
  fail(ErrorCode::kInvalidArgument, "unknown route '" + std::string(text) + "'");
}

std::vector<Route> family_routes(Family f) {
  switch (f) {
    case Family::kAddSub: return {Route::kAdd, Route::kSub};
    case Family::kTriop: return {Route::kAdd, Route::kSub, Route::kCopy};
    case Family::kCopyN: return {Route::kNone};
  }
  return {};
}

int route_answer(Route route, int a, int b, int modulus) {
  switch (route) {
    case Route::kAdd: return (a + b) % modulus;
    case Route::kSub: return ((a - b) % modulus + modulus) % modulus;
    case Route::kCopy: return a;
    case Route::kNone: break;
  }
  fail(ErrorCode::kInvalidArgument, "route has no arithmetic answer");
}

int ctrl_token(Route route, const Vocab& vocab) {
  switch (route) {
    case Route::kAdd: return vocab.ctrl_add();
    case Route::kSub: return vocab.ctrl_sub();
    case Route::kCopy: return vocab.ctrl_copy();
    case Route::kNone: return vocab.ctrl_seq();
  }
  return vocab.ctrl_neutral();
}

namespace {

bool pairwise_distinct(const std::vector<int>& xs) {
  std::set<int> seen(xs.begin(), xs.end());
  return seen.size() == xs.size();
}

std::vector<int> answers_for(Family family, int a, int b, int modulus) {
  std::vector<int> out;
  for (auto r : family_routes(family)) out.push_back(route_answer(r, a, b, modulus));
  return out;
}

}  // namespace

std::vector<int> identifiable_operands(Family family, int modulus) {
  std::vector<int> out;
  for (int b = 0; b < modulus; ++b) {
    // Distinctness of the answers does not depend on a.
    if (pairwise_distinct(answers_for(family, 0, b, modulus))) out.push_back(b);
  }
  return out;
}

std::vector<TaskInstance> gen_routing(Family family, int n_pairs, const Vocab& vocab, Rng& rng, int first_id) {
  require(family != Family::kCopyN, ErrorCode::kInvalidArgument, "gen_routing needs a routing family");
  require(n_pairs >= 1, ErrorCode::kInvalidArgument, "gen_routing needs n >= 1");
  require(vocab.modulus >= 5, ErrorCode::kInvalidArgument, "routing modulus must be at least 5");
  const auto routes = family_routes(family);
  const int m = vocab.modulus;

  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(2 * n_pairs));
  int id = first_id;
  int a = 0;
  int b = 0;
  for (int pair = 0; pair < n_pairs; ++pair) {
    const int slot_in_group = pair % static_cast<int>(routes.size());
    const int group = pair / static_cast<int>(routes.size());
    if (slot_in_group == 0) {
      // Rejection-sample operands until every route answer differs.
      do {
        a = rng.uniform_int(0, m - 1);
        b = rng.uniform_int(0, m - 1);
      } while (!pairwise_distinct(answers_for(family, a, b, m)));
    }
    const Route route = routes[static_cast<std::size_t>(slot_in_group)];
    TaskInstance donor;
    donor.pair_id = pair;
    donor.group_id = group;
    donor.family = family;
    donor.role = Role::kDonor;
    donor.tokens = {ctrl_token(route, vocab), vocab.digit(a), vocab.op(), vocab.digit(b), vocab.eq()};
    donor.slots = {{"ctrl", 0}, {"a", 1}, {"op", 2}, {"b", 3}, {"eq", 4}};
    donor.route = route;
    donor.route_answers = answers_for(family, a, b, m);
    donor.target = {route_answer(route, a, b, m)};

    TaskInstance receiver = donor;
    receiver.role = Role::kReceiver;
    receiver.tokens[0] = vocab.ctrl_neutral();

    donor.id = id++;
    receiver.id = id++;
    out.push_back(std::move(donor));
    out.push_back(std::move(receiver));
  }
  return out;
}

std::vector<TaskInstance> gen_copyN(int n, int count, const Vocab& vocab, Rng& rng, int max_positions,
                                    int first_id) {
  require(n >= 1, ErrorCode::kInvalidArgument, "copyN needs N >= 1");
  require(count >= 1, ErrorCode::kInvalidArgument, "gen_copyN needs count >= 1");
  // The teacher-forced sequence is prompt (N + 2) plus N - 1 fed-back tokens.
  require(n <= 12 && 2 * n + 1 <= max_positions, ErrorCode::kCapacity,
          "copy" + std::to_string(n) + " exceeds the context budget");
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    TaskInstance inst;
    inst.id = first_id + i;
    inst.pair_id = inst.id;
    inst.group_id = inst.id;
    inst.family = Family::kCopyN;
    inst.role = Role::kDonor;
    inst.route = Route::kNone;
    inst.tokens.push_back(vocab.ctrl_seq());
    inst.slots["ctrl"] = 0;
    for (int j = 1; j <= n; ++j) {
      const int tok = vocab.payload(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(vocab.payload_size))));
      inst.tokens.push_back(tok);
      inst.target.push_back(tok);
      inst.slots["payload_" + std::to_string(j)] = j;
    }
    inst.tokens.push_back(vocab.eq());
    inst.slots["eq"] = n + 1;
    out.push_back(std::move(inst));
  }
  return out;
}

TaskInstance corrupt(const TaskInstance& instance, std::span<const std::string> slots, const Vocab& vocab,
                     Rng& rng) {
  TaskInstance out = instance;
  for (const auto& name : slots) {
    require(name.starts_with("payload_") || name == "a" || name == "b", ErrorCode::kInvalidArgument,
            "slot '" + name + "' is a structure slot and cannot be corrupted");
    const auto it = instance.slots.find(name);
    require(it != instance.slots.end(), ErrorCode::kAddress, "instance has no slot '" + name + "'");
    if (std::find(out.corrupted.begin(), out.corrupted.end(), name) != out.corrupted.end()) continue;
    auto& tok = out.tokens[static_cast<std::size_t>(it->second)];
    const bool payload = name.starts_with("payload_");
    const int base = payload ? vocab.payload(0) : 0;
    const int size = payload ? vocab.payload_size : vocab.modulus;
    // Uniform over the size - 1 alternatives.
    const int offset = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size - 1)));
    const int original = tok - base;
    tok = base + (offset >= original ? offset + 1 : offset);
    out.corrupted.push_back(name);
  }
  return out;
}

std::vector<std::string> default_corrupt_slots(int n) {
  std::vector<std::string> out;
  for (int j = std::max(1, n - 1); j <= n; ++j) out.push_back("payload_" + std::to_string(j));
  return out;
}

std::string hash_ids(std::span<const int> ids) {
  std::string text;
  for (int id : ids) text += std::to_string(id) + ",";
  return sha256_hex(text);
}

SplitPlan make_split(std::span<const TaskInstance> instances, int n_support, Rng& rng) {
  require(n_support >= 1, ErrorCode::kInvalidArgument, "support must be non-empty");
  require(static_cast<std::size_t>(n_support) < instances.size(), ErrorCode::kInvalidArgument,
          "n_support must be smaller than the instance count");

  std::vector<int> groups;
  for (const auto& inst : instances) groups.push_back(inst.group_id);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  rng.shuffle(groups);
  std::map<int, std::size_t> group_rank;
  for (std::size_t i = 0; i < groups.size(); ++i) group_rank[groups[i]] = i;

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return group_rank[instances[x].group_id] < group_rank[instances[y].group_id];
  });

  std::vector<Route> strata;
  for (const auto& inst : instances) {
    if (std::find(strata.begin(), strata.end(), inst.route) == strata.end()) strata.push_back(inst.route);
  }
  std::sort(strata.begin(), strata.end());
  const int k = static_cast<int>(strata.size());
  std::map<Route, int> quota;
  for (int s = 0; s < k; ++s) quota[strata[static_cast<std::size_t>(s)]] = n_support / k + (s < n_support % k ? 1 : 0);

  SplitPlan plan;
  plan.seed = rng.seed();
  std::map<Route, int> taken;
  for (auto i : order) {
    const auto& inst = instances[i];
    if (taken[inst.route] < quota[inst.route]) {
      ++taken[inst.route];
      plan.support.push_back(inst.id);
    } else {
      plan.query.push_back(inst.id);
    }
  }
  require(static_cast<int>(plan.support.size()) == n_support, ErrorCode::kInvalidArgument,
          "a route stratum is too small for the requested support size");
  std::sort(plan.support.begin(), plan.support.end());
  std::sort(plan.query.begin(), plan.query.end());
  plan.support_hash = hash_ids(plan.support);
  plan.query_hash = hash_ids(plan.query);
  return plan;
}

std::vector<int> pair_ids(std::span<const TaskInstance> instances, std::span<const int> donor_ids) {
  std::set<int> wanted_ids(donor_ids.begin(), donor_ids.end());
  std::set<int> pairs;
  for (const auto& inst : instances) {
    if (wanted_ids.contains(inst.id)) pairs.insert(inst.pair_id);
  }
  std::vector<int> out;
  for (const auto& inst : instances) {
    if (pairs.contains(inst.pair_id)) out.push_back(inst.id);
  }
  return out;
}

std::vector<TaskInstance> select(std::span<const TaskInstance> instances, std::span<const int> ids) {
  std::map<int, const TaskInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.id] = &inst;
  std::vector<TaskInstance> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto it = by_id.find(id);
    require(it != by_id.end(), ErrorCode::kInvalidArgument, "unknown instance id " + std::to_string(id));
    out.push_back(*it->second);
  }
  return out;
}

std::vector<TaskInstance> with_role(std::span<const TaskInstance> instances, Role role) {
  std::vector<TaskInstance> out;
  for (const auto& inst : instances) {
    if (inst.role == role) out.push_back(inst);
  }
  return out;
}

}  // namespace patchlab
