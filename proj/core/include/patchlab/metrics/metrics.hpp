#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchlab/numerics/rng.hpp"
#include "patchlab/numerics/stats.hpp"
#include "patchlab/tasks/tasks.hpp"

namespace patchlab {

using Rollout = std::vector<int>;

// Per-instance 1/0 answer correctness and its mean.
std::vector<double> route_correct(std::span<const int> predictions, std::span<const TaskInstance> instances);
double route_acc(std::span<const int> predictions, std::span<const TaskInstance> instances);

// Target indices to score per rollout; an empty outer vector scores all.
using TargetMask = std::vector<std::vector<int>>;

// Target indices of an instance's corrupted payload slots.
std::vector<int> corrupt_only_indices(const TaskInstance& inst);

// Per-rollout token accuracy over the (masked) target positions.
std::vector<double> token_accuracy(std::span<const Rollout> rollouts, std::span<const Rollout> targets,
                                   const TargetMask& mask = {});
double gen_tok_acc_full(std::span<const Rollout> rollouts, std::span<const Rollout> targets,
                        const TargetMask& mask = {});
double gen_exact_full(std::span<const Rollout> rollouts, std::span<const Rollout> targets);

// (condition - receiver) / (donor - receiver), unclamped.
double recovery_fraction(double condition, double receiver, double donor);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  Interval ci;
  int n = 0;
};

Aggregate aggregate(std::span<const double> values, Rng& rng, double level = 0.95,
                    int n_resamples = kDefaultBootstrapResamples);

struct ShortlistGain {
  int budget = 0;  // after clamping
  bool clamped = false;
  double baseline = 0.0;
  double oracle_at_budget = 0.0;
  double oracle_all = 0.0;
  double gain = 0.0;
  double full_gain = 0.0;
  double fraction = 0.0;
};

// scores[i][c] is the correctness of candidate c on instance i, candidates
// in the proposer's own order. B larger than the candidate count is clamped.
ShortlistGain oracle_shortlist_gain(const std::vector<std::vector<double>>& scores, int baseline_index, int budget);

// Fixed-point text for report cells, so reports are byte-stable.
std::string format_value(double v, int digits = 6);

}  // namespace patchlab
