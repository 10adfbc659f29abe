#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/model/interface.hpp"
#include "patchlab/model/weights.hpp"

namespace patchlab {

// Post-intervention state captured during one forward pass.
using ActivationCache = std::map<Address, Tensor>;

struct ForwardResult {
  Tensor logits;  // [len x vocab]
  ActivationCache cache;
};

// Pre-norm decoder forward. Every intervention writes its resolved addresses
// after the native activation is computed and before anything downstream
// reads it; K/V writes at position p are what every query at >= p reads.
// Specs touching the same address raise kConflict.
ForwardResult forward(const Weights& w, std::span<const int> tokens, const SlotMap& slots = {},
                      std::span<const InterventionSpec> interventions = {}, std::span<const Probe> probes = {});

struct SequenceRequest {
  std::vector<int> tokens;
  SlotMap slots;
  std::vector<InterventionSpec> interventions;
  std::vector<Probe> probes;
};

// Same as forward() for many sequences; equal-length requests share one
// batched pass. Results come back in request order.
std::vector<ForwardResult> forward_batch(const Weights& w, std::span<const SequenceRequest> requests);

// Greedy rollout of n_steps tokens. Interventions may only address prompt
// positions and are re-applied at every step, so transplanted prompt K/V stay
// what later queries read. Argmax ties go to the lowest token id.
std::vector<int> generate(const Weights& w, std::span<const int> prompt, int n_steps, const SlotMap& slots = {},
                          std::span<const InterventionSpec> interventions = {});

struct GenerationRequest {
  std::vector<int> prompt;
  SlotMap slots;
  std::vector<InterventionSpec> interventions;
};

// generate() over many prompts, batching equal-length prompts at each step.
std::vector<std::vector<int>> generate_batch(const Weights& w, std::span<const GenerationRequest> requests,
                                             int n_steps);

int argmax_row(const Tensor& logits, std::size_t row);

// Replaces (replace_token) or offsets the token embedding at one position.
// Positional embeddings are always added.
struct InputOverride {
  int position = 0;
  Tensor vector;
  bool replace_token = false;
};

struct TrainExample {
  std::vector<int> tokens;
  std::vector<std::pair<int, int>> targets;  // (position, target token)
  std::vector<InputOverride> overrides;
};

using ParamMask = std::set<std::string>;
ParamMask all_parameters(const ModelConfig& cfg);

struct LossGrad {
  double loss = 0.0;
  Weights grads;  // zero outside the mask
  // d loss / d override vector, per example, per override.
  std::vector<std::vector<Tensor>> override_grads;
};

// Mean cross-entropy over every supervised (position, target) pair in the
// batch, with reverse-mode gradients for the masked parameters and for every
// input override.
LossGrad loss_and_grad(const Weights& w, std::span<const TrainExample> batch, const ParamMask& mask);

double batch_loss(const Weights& w, std::span<const TrainExample> batch);

}  // namespace patchlab
