#include "patchlab/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "patchlab/error.hpp"

namespace patchlab {

std::vector<double> route_correct(std::span<const int> predictions, std::span<const TaskInstance> instances) {
  require(predictions.size() == instances.size(), ErrorCode::kInvalidArgument,
          "route_acc needs one prediction per instance");
  std::vector<double> out;
  out.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    require(!instances[i].target.empty(), ErrorCode::kInvalidArgument, "instance has no answer token");
    out.push_back(predictions[i] == instances[i].target.front() ? 1.0 : 0.0);
  }
  return out;
}

double route_acc(std::span<const int> predictions, std::span<const TaskInstance> instances) {
  require(!predictions.empty(), ErrorCode::kInvalidArgument, "route_acc on an empty set");
  return mean(route_correct(predictions, instances));
}

std::vector<int> corrupt_only_indices(const TaskInstance& inst) {
  std::vector<int> out;
  for (const auto& name : inst.corrupted) {
    if (name.starts_with("payload_")) out.push_back(std::stoi(name.substr(8)) - 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> token_accuracy(std::span<const Rollout> rollouts, std::span<const Rollout> targets,
                                   const TargetMask& mask) {
  require(rollouts.size() == targets.size(), ErrorCode::kInvalidArgument, "one rollout per target needed");
  require(mask.empty() || mask.size() == targets.size(), ErrorCode::kInvalidArgument, "mask size mismatch");
  std::vector<double> out;
  out.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    require(!t.empty(), ErrorCode::kInvalidArgument, "empty target");
    require(rollouts[i].size() >= t.size(), ErrorCode::kInvalidArgument, "rollout shorter than target");
    std::vector<int> idx;
    if (mask.empty()) {
      for (std::size_t j = 0; j < t.size(); ++j) idx.push_back(static_cast<int>(j));
    } else {
      idx = mask[i];
    }
    require(!idx.empty(), ErrorCode::kInvalidArgument, "mask selects no target positions");
    int hits = 0;
    for (int j : idx) {
      require(j >= 0 && static_cast<std::size_t>(j) < t.size(), ErrorCode::kInvalidArgument, "mask index out of range");
      hits += rollouts[i][static_cast<std::size_t>(j)] == t[static_cast<std::size_t>(j)] ? 1 : 0;
    }
    out.push_back(static_cast<double>(hits) / static_cast<double>(idx.size()));
  }
  return out;
}

double gen_tok_acc_full(std::span<const Rollout> rollouts, std::span<const Rollout> targets, const TargetMask& mask) {
  require(!targets.empty(), ErrorCode::kInvalidArgument, "no targets");
  return mean(token_accuracy(rollouts, targets, mask));
}

double gen_exact_full(std::span<const Rollout> rollouts, std::span<const Rollout> targets) {
  require(!targets.empty(), ErrorCode::kInvalidArgument, "no targets");
  require(rollouts.size() == targets.size(), ErrorCode::kInvalidArgument, "one rollout per target needed");
  int exact = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require(!targets[i].empty(), ErrorCode::kInvalidArgument, "empty target");
    require(rollouts[i].size() >= targets[i].size(), ErrorCode::kInvalidArgument, "rollout shorter than target");
    exact += std::equal(targets[i].begin(), targets[i].end(), rollouts[i].begin()) ? 1 : 0;
  }
  return static_cast<double>(exact) / static_cast<double>(targets.size());
}

double recovery_fraction(double condition, double receiver, double donor) {
  require(donor > receiver, ErrorCode::kUndefinedDenominator, "recovery fraction needs donor > receiver");
  return (condition - receiver) / (donor - receiver);
}

Aggregate aggregate(std::span<const double> values, Rng& rng, double level, int n_resamples) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "aggregate of no values");
  Aggregate a;
  a.n = static_cast<int>(values.size());
  a.mean = mean(values);
  a.std = sample_std(values);
  a.ci = bootstrap_ci(values, level, n_resamples, rng);
  return a;
}

ShortlistGain oracle_shortlist_gain(const std::vector<std::vector<double>>& scores, int baseline_index, int budget) {
  require(!scores.empty(), ErrorCode::kInvalidArgument, "no instances");
  require(budget >= 1, ErrorCode::kInvalidArgument, "shortlist budget must be >= 1");
  const int n_cand = static_cast<int>(scores.front().size());
  require(n_cand >= 1, ErrorCode::kInvalidArgument, "no candidates");
  require(baseline_index >= 0 && baseline_index < n_cand, ErrorCode::kInvalidArgument, "baseline index out of range");
  ShortlistGain g;
  g.clamped = budget > n_cand;
  g.budget = std::min(budget, n_cand);
  for (const auto& row : scores) {
    require(static_cast<int>(row.size()) == n_cand, ErrorCode::kInvalidArgument, "ragged score matrix");
    g.baseline += row[static_cast<std::size_t>(baseline_index)];
    g.oracle_at_budget += *std::max_element(row.begin(), row.begin() + g.budget);
    g.oracle_all += *std::max_element(row.begin(), row.end());
  }
  const double n = static_cast<double>(scores.size());
  g.baseline /= n;
  g.oracle_at_budget /= n;
  g.oracle_all /= n;
  g.gain = g.oracle_at_budget - g.baseline;
  g.full_gain = g.oracle_all - g.baseline;
  require(g.full_gain != 0.0, ErrorCode::kUndefinedDenominator, "oracle over all candidates adds no gain");
  g.fraction = g.gain / g.full_gain;
  return g;
}

std::string format_value(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string out = buf;
  if (out.starts_with("-") && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

}  // namespace patchlab
