#pragma once

#include <string>
#include <vector>

#include "patchlab/interventions/patch.hpp"

namespace patchlab {

// The route read-out is the highest-logit token among the instance's route
// answers (ties to the lower id); the free argmax over the whole vocabulary
// is kept as answer_acc.
int route_readout(const Tensor& logits, const TaskInstance& inst);

struct RoutingEval {
  std::vector<int> predictions;  // route read-out
  std::vector<int> free_predictions;
  std::vector<double> correct;
  double route_acc = 0.0;
  double answer_acc = 0.0;
  std::vector<Tensor> logits;  // full [len x vocab] per instance
};

// Answer-position argmax for every instance under its spec list.
RoutingEval evaluate_routing(const Weights& w, std::span<const TaskInstance> instances,
                             std::span<const std::vector<InterventionSpec>> specs = {});

// Binds one instance to its spec list; empty specs give the plain run.
Tensor apply(const Weights& w, const TaskInstance& instance, std::span<const InterventionSpec> specs);

struct BatteryRow {
  std::string condition;
  double route_acc = 0.0;
  std::vector<double> per_instance;
};

struct Table2 {
  Interface resid;
  Interface kv;
  std::string split_hash;
  std::vector<BatteryRow> rows;
  // max |logit| gap of (compiled, KV<-centered) vs centered and
  // (centered, KV<-compiled) vs compiled, over every query instance.
  double necessity_gap = 0.0;
  double sufficiency_gap = 0.0;

  const BatteryRow& row(const std::string& condition) const;
};

inline constexpr double kClosureTolerance = 1e-6;

// Condition names in report order.
const std::vector<std::string>& table2_conditions();

// The eight-condition battery on query pairs (donors and receivers,
// pair-aligned) at a residual interface. K/V rows use every downstream K/V
// read of the same slots; condition values are captured on the receivers
// under the corresponding patch.
Table2 battery_table2(const Weights& w, const CompiledPatch& compiled, const CompiledPatch& centered,
                      std::span<const TaskInstance> query_donors, std::span<const TaskInstance> query_receivers,
                      const std::string& query_hash, std::optional<std::vector<int>> kv_heads = std::nullopt);

}  // namespace patchlab
