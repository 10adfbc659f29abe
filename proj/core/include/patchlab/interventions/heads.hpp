#pragma once

#include <vector>

#include "patchlab/interventions/battery.hpp"

namespace patchlab {

struct HeadId {
  int layer = 0;
  int head = 0;
  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

// Per-position support means of every head's V vectors, captured on the
// support receivers under the compiled condition.
struct HeadMeans {
  std::string split_hash;
  int length = 0;
  // [layer][head][position] -> d_head vector
  std::vector<std::vector<std::vector<Tensor>>> v;
};

HeadMeans head_means(const Weights& w, std::span<const TaskInstance> support_receivers,
                     std::span<const std::vector<InterventionSpec>> compiled_specs, const Provenance& provenance);

// Mean-ablation specs: every listed head's V at every position <- its mean.
std::vector<InterventionSpec> ablation_specs(const HeadMeans& means, std::span<const HeadId> heads);

struct HeadRanking {
  std::vector<HeadId> order;
  std::vector<double> damage;  // aligned with order
  std::string split_hash;
};

// Heads ordered by single-head ablation damage to support route_acc under
// the compiled condition; ties go to the lower (layer, head).
HeadRanking head_rank(const Weights& w, std::span<const TaskInstance> support_receivers,
                      std::span<const std::vector<InterventionSpec>> compiled_specs, const HeadMeans& means,
                      SplitTag split);

struct AblationComparison {
  std::vector<HeadId> selected;
  double intact = 0.0;
  double selected_delta = 0.0;
  std::vector<double> random_deltas;
};

// route_acc(ablated) - route_acc(intact) on query for the top-k heads and
// for n_random sets drawn with the same per-layer head budget.
AblationComparison topk_ablate_vs_random(const Weights& w, std::span<const TaskInstance> query_receivers,
                                         std::span<const std::vector<InterventionSpec>> compiled_specs,
                                         const HeadMeans& means, const HeadRanking& ranking, int k, int n_random,
                                         Rng& rng);

}  // namespace patchlab
