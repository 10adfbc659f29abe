#pragma once

#include <functional>
#include <map>
#include <optional>

#include "patchlab/interventions/state_bank.hpp"

namespace patchlab {

enum class PatchClass { kCompiled, kCentered };
std::string_view to_string(PatchClass c);

struct CompiledPatch {
  Interface iface;
  PatchClass cls = PatchClass::kCompiled;
  // COMPILED: per-route support means. CENTERED: one entry under kNone.
  std::map<Route, std::vector<Tensor>> vectors;
  std::optional<int> rank;
  int achieved_rank = 0;
  std::string split_hash;

  const std::vector<Tensor>& for_route(Route route) const;
};

// Per-address means over a support donor (or clean) bank. CENTERED is the
// mean of the per-route means. With `rank`, each stacked (addresses x width)
// patch matrix is replaced by its truncated SVD reconstruction.
CompiledPatch compile_patch(const StateBank& bank, PatchClass cls, std::optional<int> rank = std::nullopt);

// Per-instance bank holding the patch vectors for each instance's route.
StateBank patch_bank(const CompiledPatch& patch, std::span<const TaskInstance> instances, Provenance provenance);

// Largest rank any stacked patch matrix can have.
int max_patch_rank(const CompiledPatch& patch);

struct RankSweep {
  int r_star = 0;
  double full_metric = 0.0;
  std::vector<double> metrics;  // index r = 0..max_rank
};

// Smallest r with metric(r) >= metric(full) - delta, by an exhaustive
// ascending scan. eval(nullopt) is the untruncated patch.
RankSweep rank_sweep(const std::function<double(std::optional<int>)>& eval, int max_rank, double delta,
                     SplitTag eval_split);

}  // namespace patchlab
