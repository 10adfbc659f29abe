#pragma once

#include <functional>
#include <string>
#include <vector>

#include "patchlab/model/transformer.hpp"
#include "patchlab/tasks/tasks.hpp"
#include "patchlab/training/adamw.hpp"

namespace patchlab {

struct TrainBudget {
  int n_support = 16;
  int steps = 200;
  double lr = 3e-3;

  long cost() const { return static_cast<long>(n_support) * steps; }
};

// Supervision at the answer position (routing) or every continuation
// position under teacher forcing (copyN).
TrainExample training_example(const TaskInstance& inst);

using ExampleStream = std::function<TrainExample(Rng&)>;

// Fresh donor instances of a routing family; NEUTRAL never appears.
ExampleStream routing_stream(Family family, const Vocab& vocab);
// Fresh copy instances with N drawn uniformly from `lengths`.
ExampleStream copy_stream(std::vector<int> lengths, const Vocab& vocab, int max_positions);

struct BaseTrainConfig {
  int steps = 3000;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global gradient norm; 0 disables
  int checkpoint_every = 1000;
  int log_every = 100;
};

struct TrainLog {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<std::pair<int, double>> loss_curve;       // (step, batch loss)
  std::vector<std::pair<int, std::string>> checkpoints;  // (step, weights digest)
  long examples_seen = 0;
  long neutral_audit_hits = 0;
};

struct TrainResult {
  Weights weights;
  TrainLog log;
};

// AdamW on every parameter, cross-entropy at the supervised positions.
// If `neutral_token` >= 0, every streamed example is audited for it and any
// hit raises kInvalidArgument. A loss above 10x the initial loss for 100
// consecutive steps raises kTrainingFailure.
TrainResult train_base(const ModelConfig& cfg, const ExampleStream& stream, const BaseTrainConfig& tc, Rng& rng,
                       int neutral_token = -1,
                       const std::function<void(int, const Weights&)>& on_checkpoint = {});

struct TunableSlot {
  std::string slot;
  Route route = Route::kNone;
  Tensor vector;              // learned (replacement or additive) vector
  bool replaces_token = false;
  bool frozen_random_base = false;
  Tensor base;                // frozen random base when frozen_random_base
  double support_acc = 0.0;  // after the last step
  InputOverride override_for(const TaskInstance& inst) const;
};

// Replaces the ctrl embedding with a learned vector, initialised from the
// NEUTRAL row, to maximise the route likelihood on support receivers.
TunableSlot invert_control(const Weights& w, std::span<const TaskInstance> support_receivers, Route route,
                           const TrainBudget& budget, const Vocab& vocab);

// Additive vector (initialised at zero) at any slot of support receivers of
// one route. With frozen_random_base the slot's token row is first replaced
// by a frozen Gaussian(0, 0.02) vector drawn from rng.
// on_step(k, slot) runs after optimizer step k (1-based).
TunableSlot tune_slot(const Weights& w, const std::string& slot, std::span<const TaskInstance> support_receivers,
                      Route route, const TrainBudget& budget, Rng& rng, bool frozen_random_base = false,
                      const std::function<void(int, const TunableSlot&)>& on_step = {});

// Route accuracy of receivers each carrying its own route's tuned slot.
double tuned_route_acc(const Weights& w, std::span<const TaskInstance> receivers,
                       std::span<const TunableSlot> per_route);

struct LowRankUpdate {
  int layer = 0;
  std::string projection = "attn.w_o";
  int rank = 4;
  double alpha = 1.0;
  Tensor a;  // [d x r]
  Tensor b;  // [r x d]
  long cost = 0;
  double support_acc = 0.0;
  double query_acc = 0.0;

  Weights apply_to(const Weights& w) const;
};

// Trains A (Gaussian 0.02) and B (zero) of W_O + alpha A B on support
// receivers with their route labels; the base weights stay frozen.
LowRankUpdate lowrank_baseline(const Weights& w, int layer, int rank, double alpha,
                               std::span<const TaskInstance> support_receivers,
                               std::span<const TaskInstance> query_receivers, const TrainBudget& budget, Rng& rng);

}  // namespace patchlab
