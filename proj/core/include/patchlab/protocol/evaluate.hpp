#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchlab/interventions/battery_io.hpp"
#include "patchlab/interventions/heads.hpp"
#include "patchlab/protocol/classify.hpp"
#include "patchlab/protocol/search.hpp"
#include "patchlab/tasks/vocab.hpp"
#include "patchlab/training/training.hpp"

namespace patchlab {

struct LockRequest {
  std::string branch_id;
  std::string config_hash;
  SearchSpace space;
  Thresholds thresholds;
  ManifestSeeds seeds;
  double multiplicity_delta = 0.01;
  double rank_delta = 0.01;
  std::map<std::string, std::string> notes;  // merged into the manifest notes
};

// Support stage of a branch: search, head ranking per model and the rank
// sweep, all on support data, then freeze. `query_hash` is recorded, never
// read.
LockManifest lock_branch(const LockRequest& req, std::span<const Weights> models, const SplitView& support,
                         const std::string& query_hash);

struct EvaluateOptions {
  double head_fraction = 0.25;
  int n_random_headsets = 20;
  bool baselines = false;
  TrainBudget inversion_budget{32, 200, 3e-3};
  TrainBudget lowrank_budget{96, 800, 3e-3};
  int lowrank_rank = 4;
};

struct ControlOutcome {
  std::string name;
  bool applicable = true;
  double acc = 0.0;
  double recovery = 0.0;
};

struct SeedEvidence {
  std::uint64_t model_seed = 0;
  double donor_acc = 0.0;
  double receiver_acc = 0.0;
  Table2 table;
  double compiled_recovery = 0.0;
  std::vector<ControlOutcome> controls;
  // Downstream Q/K/V of the selected slots; absent when nothing is downstream.
  std::optional<double> widened_acc;
  std::optional<double> widened_recovery;
  AblationComparison heads;
  std::optional<double> inversion_acc;
  std::optional<double> lowrank_acc;
  Verdict verdict;
};

ClassifyInput classify_input(const SeedEvidence& s);

struct EvidenceReport {
  std::string branch_id;
  std::string family_id;
  std::string config_hash;
  std::string manifest_hash;
  Thresholds thresholds;
  ManifestSeeds seeds;
  std::vector<SeedEvidence> per_seed;
  std::vector<ReportRow> rows;
  std::map<std::string, Aggregate> aggregates;
  std::optional<double> head_sign_p;  // absent when a seed ties exactly
  Verdict verdict;                    // on the seed means
  int seeds_single = 0;
};

// One-shot query evaluation: the battery, every mandatory control, the
// widened interface and head specificity. The manifest moves to CONSUMED on
// success. A residual selection is required.
EvidenceReport query_evaluate(LockManifest& manifest, std::span<const Weights> models, const SplitView& support,
                              const SplitView& query, const Vocab& vocab, const EvaluateOptions& opts = {});

std::string report_json(const EvidenceReport& report);
std::string report_csv(const EvidenceReport& report);

struct LedgerSummary {
  std::map<std::string, int> axis_counts;
  int n_candidates = 0;
  int total_evaluations = 0;
  double selected_score = 0.0;
  double delta = 0.0;
  int multiplicity = 0;  // candidates within delta of the selected score
};

// Needs a LOCKED or CONSUMED manifest.
LedgerSummary ledger_report(const LockManifest& manifest);

}  // namespace patchlab
