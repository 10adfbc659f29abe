#include "patchlab/interventions/heads.hpp"

#include <algorithm>
#include <numeric>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

std::vector<std::string> all_positions(int length) {
  std::vector<std::string> out;
  for (int p = 0; p < length; ++p) out.push_back("pos:" + std::to_string(p));
  return out;
}

std::vector<std::vector<InterventionSpec>> with_extra(std::span<const std::vector<InterventionSpec>> base,
                                                      const std::vector<InterventionSpec>& extra) {
  std::vector<std::vector<InterventionSpec>> out(base.begin(), base.end());
  for (auto& specs : out) specs.insert(specs.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace

HeadMeans head_means(const Weights& w, std::span<const TaskInstance> support_receivers,
                     std::span<const std::vector<InterventionSpec>> compiled_specs, const Provenance& provenance) {
  require(provenance.split == SplitTag::kSupport, ErrorCode::kLockViolation, "head means come from support only");
  require(!support_receivers.empty(), ErrorCode::kInvalidArgument, "no support instances");
  const auto& cfg = w.config;
  HeadMeans m;
  m.split_hash = provenance.split_hash;
  m.length = static_cast<int>(support_receivers.front().tokens.size());
  for (const auto& inst : support_receivers) {
    require(static_cast<int>(inst.tokens.size()) == m.length, ErrorCode::kInvalidArgument,
            "head means need equal-length instances");
  }
  Interface iface;
  iface.channels = Channels::kVOnly;
  for (int l = 0; l < cfg.n_layers; ++l) iface.keys.push_back({l, Site::kV, std::nullopt, all_positions(m.length)});
  const auto bank = capture(w, support_receivers, iface, provenance, compiled_specs);

  // resolve order: layer, position, head.
  m.v.assign(static_cast<std::size_t>(cfg.n_layers),
             std::vector<std::vector<Tensor>>(static_cast<std::size_t>(cfg.n_heads),
                                              std::vector<Tensor>(static_cast<std::size_t>(m.length))));
  std::size_t idx = 0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int p = 0; p < m.length; ++p) {
      for (int h = 0; h < cfg.n_heads; ++h, ++idx) {
        Tensor acc({static_cast<std::size_t>(cfg.d_head)});
        for (const auto& e : bank.entries) acc.vec() += e.vectors[idx].vec();
        acc.vec() /= static_cast<double>(bank.entries.size());
        m.v[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)][static_cast<std::size_t>(p)] = std::move(acc);
      }
    }
  }
  return m;
}

std::vector<InterventionSpec> ablation_specs(const HeadMeans& means, std::span<const HeadId> heads) {
  std::vector<InterventionSpec> out;
  for (const auto& id : heads) {
    InterventionSpec spec;
    spec.key = {id.layer, Site::kV, std::vector<int>{id.head}, all_positions(means.length)};
    spec.channels = Channels::kVOnly;
    spec.source = means.v.at(static_cast<std::size_t>(id.layer)).at(static_cast<std::size_t>(id.head));
    out.push_back(std::move(spec));
  }
  return out;
}

HeadRanking head_rank(const Weights& w, std::span<const TaskInstance> support_receivers,
                      std::span<const std::vector<InterventionSpec>> compiled_specs, const HeadMeans& means,
                      SplitTag split) {
  require(split == SplitTag::kSupport, ErrorCode::kLockViolation, "heads are ranked on support only");
  const auto& cfg = w.config;
  const double intact = evaluate_routing(w, support_receivers, compiled_specs).route_acc;
  std::vector<std::pair<HeadId, double>> scored;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) {
      const HeadId id{l, h};
      const auto specs = with_extra(compiled_specs, ablation_specs(means, std::span<const HeadId>(&id, 1)));
      scored.push_back({id, intact - evaluate_routing(w, support_receivers, specs).route_acc});
    }
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
  HeadRanking r;
  r.split_hash = means.split_hash;
  for (const auto& [id, dmg] : scored) {
    r.order.push_back(id);
    r.damage.push_back(dmg);
  }
  return r;
}

AblationComparison topk_ablate_vs_random(const Weights& w, std::span<const TaskInstance> query_receivers,
                                         std::span<const std::vector<InterventionSpec>> compiled_specs,
                                         const HeadMeans& means, const HeadRanking& ranking, int k, int n_random,
                                         Rng& rng) {
  const auto& cfg = w.config;
  require(k >= 0 && k <= cfg.n_layers * cfg.n_heads, ErrorCode::kInvalidArgument,
          "k exceeds the number of heads");
  require(n_random >= 0, ErrorCode::kInvalidArgument, "n_random must be non-negative");
  AblationComparison out;
  out.intact = evaluate_routing(w, query_receivers, compiled_specs).route_acc;
  out.selected.assign(ranking.order.begin(), ranking.order.begin() + k);
  auto delta = [&](const std::vector<HeadId>& heads) {
    if (heads.empty()) return 0.0;
    const auto specs = with_extra(compiled_specs, ablation_specs(means, heads));
    return evaluate_routing(w, query_receivers, specs).route_acc - out.intact;
  };
  out.selected_delta = delta(out.selected);

  std::vector<int> budget(static_cast<std::size_t>(cfg.n_layers), 0);
  for (const auto& id : out.selected) ++budget[static_cast<std::size_t>(id.layer)];
  for (int s = 0; s < n_random; ++s) {
    std::vector<HeadId> heads;
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::vector<int> pool(static_cast<std::size_t>(cfg.n_heads));
      std::iota(pool.begin(), pool.end(), 0);
      rng.shuffle(pool);
      for (int j = 0; j < budget[static_cast<std::size_t>(l)]; ++j) heads.push_back({l, pool[static_cast<std::size_t>(j)]});
    }
    std::sort(heads.begin(), heads.end());
    out.random_deltas.push_back(delta(heads));
  }
  return out;
}

}  // namespace patchlab
