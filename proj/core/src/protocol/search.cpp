#include "patchlab/protocol/search.hpp"

#include <algorithm>
#include <climits>

#include "patchlab/error.hpp"
#include "patchlab/interventions/battery.hpp"
#include "patchlab/numerics/stats.hpp"

namespace patchlab {

SplitView split_view(std::span<const TaskInstance> instances, const SplitPlan& plan, SplitTag tag) {
  const auto& ids = tag == SplitTag::kSupport ? plan.support : plan.query;
  const auto members = select(instances, pair_ids(instances, ids));
  SplitView v;
  v.tag = tag;
  v.hash = tag == SplitTag::kSupport ? plan.support_hash : plan.query_hash;
  v.donors = with_role(members, Role::kDonor);
  v.receivers = with_role(members, Role::kReceiver);
  require(v.donors.size() == v.receivers.size(), ErrorCode::kInvalidArgument, "split side is not pair-aligned");
  return v;
}

std::string Candidate::label() const {
  std::string out = describe(key) + "/" + std::string(to_string(channels));
  if (head_budget > 0) out += "/k" + std::to_string(head_budget);
  out += "/r" + (rank ? std::to_string(*rank) : std::string("full"));
  return out;
}

std::vector<Candidate> enumerate(const SearchSpace& space, const ModelConfig& cfg) {
  std::vector<int> budgets = space.head_budgets.empty() ? std::vector<int>{0} : space.head_budgets;
  std::vector<std::optional<int>> ranks(space.ranks.begin(), space.ranks.end());
  ranks.push_back(std::nullopt);
  std::vector<Candidate> out;
  for (int layer : space.layers) {
    require(layer >= 0 && layer < cfg.n_layers, ErrorCode::kInvalidArgument,
            "search layer " + std::to_string(layer) + " is out of range");
    for (Site site : space.sites) {
      for (const auto& slot : space.slots) {
        for (Channels ch : space.channel_sets) {
          if (is_resid_site(site) != (ch == Channels::kResid)) continue;
          // Attention keys name the site through the channel set; keep one.
          if (!is_resid_site(site) && channel_sites(ch).front() != site) continue;
          for (int k : is_resid_site(site) ? std::vector<int>{0} : budgets) {
            require(k >= 0 && k <= cfg.n_heads, ErrorCode::kInvalidArgument, "head budget out of range");
            for (const auto& r : ranks) {
              out.push_back({{layer, site, std::nullopt, {slot}}, ch, k == cfg.n_heads ? 0 : k, r});
            }
          }
        }
      }
    }
  }
  return out;
}

bool prefer(const Candidate& a, const Candidate& b) {
  const auto budget = [](const Candidate& c) { return c.head_budget == 0 ? INT_MAX : c.head_budget; };
  const auto rank = [](const Candidate& c) { return c.rank ? *c.rank : INT_MAX; };
  if (a.key.layer != b.key.layer) return a.key.layer < b.key.layer;
  if (a.key.site != b.key.site) return a.key.site < b.key.site;
  if (budget(a) != budget(b)) return budget(a) < budget(b);
  if (rank(a) != rank(b)) return rank(a) < rank(b);
  if (a.channels != b.channels) return a.channels < b.channels;
  return a.key.slots < b.key.slots;
}

CandidatePatches compile_candidate(const Weights& w, const InterfaceKey& key, Channels channels,
                                   std::optional<int> rank, const SplitView& support) {
  const Interface iface = is_resid_site(key.site) ? resid_interface(key) : Interface{{key}, channels};
  const auto bank = capture(w, support.donors, iface, {support.tag, Condition::kDonor, support.hash});
  return {compile_patch(bank, PatchClass::kCompiled, rank), compile_patch(bank, PatchClass::kCentered, rank)};
}

std::vector<std::vector<InterventionSpec>> patch_specs(const Weights& w, const CompiledPatch& patch,
                                                       std::span<const TaskInstance> receivers, const SplitView& view,
                                                       Condition condition) {
  const auto bank = patch_bank(patch, receivers, {view.tag, condition, view.hash});
  return bank_specs(bank, receivers, w.config);
}

namespace {

double support_score(const Weights& w, const InterfaceKey& key, Channels ch, std::optional<int> rank,
                     const SplitView& support) {
  const auto patches = compile_candidate(w, key, ch, rank, support);
  const auto specs = patch_specs(w, patches.compiled, support.receivers, support, Condition::kCompiled);
  return evaluate_routing(w, support.receivers, specs).route_acc;
}

}  // namespace

SearchResult support_search(const SearchSpace& space, std::span<const Weights> models, const SplitView& support,
                            double multiplicity_delta) {
  require(support.tag == SplitTag::kSupport, ErrorCode::kLockViolation,
          "support search was handed query-provenance data");
  require(!models.empty(), ErrorCode::kInvalidArgument, "support search needs at least one model");
  const auto candidates = enumerate(space, models.front().config);
  require(!candidates.empty(), ErrorCode::kInvalidArgument, "search space is empty");

  SearchResult result;
  auto& ledger = result.ledger;
  ledger.multiplicity_delta = multiplicity_delta;
  ledger.axis_counts = {{"layers", static_cast<int>(space.layers.size())},
                        {"sites", static_cast<int>(space.sites.size())},
                        {"slots", static_cast<int>(space.slots.size())},
                        {"channel_sets", static_cast<int>(space.channel_sets.size())},
                        {"head_budgets", static_cast<int>(std::max<std::size_t>(1, space.head_budgets.size()))},
                        {"ranks", static_cast<int>(space.ranks.size() + 1)}};
  ledger.n_candidates = static_cast<int>(candidates.size());

  for (const auto& cand : candidates) {
    ScoredCandidate sc;
    sc.candidate = cand;
    for (const auto& w : models) {
      InterfaceKey key = cand.key;
      std::vector<int> heads;
      if (cand.head_budget > 0) {
        std::vector<std::pair<double, int>> per_head;
        for (int h = 0; h < w.config.n_heads; ++h) {
          InterfaceKey single = key;
          single.heads = std::vector<int>{h};
          per_head.push_back({support_score(w, single, cand.channels, cand.rank, support), h});
          ++ledger.total_evaluations;
        }
        std::stable_sort(per_head.begin(), per_head.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int i = 0; i < cand.head_budget; ++i) heads.push_back(per_head[static_cast<std::size_t>(i)].second);
        std::sort(heads.begin(), heads.end());
        key.heads = heads;
      }
      sc.per_model.push_back(support_score(w, key, cand.channels, cand.rank, support));
      sc.heads_per_model.push_back(heads);
      ++ledger.total_evaluations;
    }
    sc.score = mean(sc.per_model);
    ledger.candidates.push_back({cand.label(), sc.score});
    result.ranked.push_back(std::move(sc));
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return prefer(a.candidate, b.candidate);
  });
  result.selected = result.ranked.front();
  return result;
}

}  // namespace patchlab
