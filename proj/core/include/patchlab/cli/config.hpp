#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchlab/protocol/evaluate.hpp"
#include "patchlab/training/relocation.hpp"

namespace patchlab::cli {

struct TaskSection {
  Family family = Family::kTriop;
  int n_pairs = 600;
  int modulus = 10;
  int payload_size = 16;
  std::vector<int> copy_lengths = {2, 3, 5};
  int copy_count = 300;
  int copy_support = 100;
};

struct SplitSection {
  int n_support = 96;  // donor pairs
};

struct ThresholdSection {
  Thresholds locked;
  double multiplicity_delta = 0.01;
  double rank_delta = 0.01;
  double match_tolerance = 0.01;  // relocation: match means acc >= compiled - tolerance
};

struct BudgetSection {
  BaseTrainConfig train;
  int copy_steps = 1500;
  EvaluateOptions evaluate;
  RelocationGridConfig relocation;
};

struct RunConfig {
  ModelConfig model;
  TaskSection task;
  SplitSection split;
  SearchSpace search;
  ThresholdSection thresholds;
  BudgetSection budgets;
  ManifestSeeds seeds;
  std::string output_dir = "out";
  std::string checkpoint_dir;  // empty: <output_dir>/models
  std::string branch_id = "main";

  Vocab vocab() const { return {task.modulus, task.payload_size}; }
  std::string models_dir() const;
};

RunConfig default_config();

// Missing sections and keys keep their defaults; unknown keys, wrong types
// and invalid values raise kConfig with "<origin>:<line>: ..." messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

// Canonical JSON of every setting that shapes results. Paths are left out,
// so the same run in two directories hashes the same.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

}  // namespace patchlab::cli
