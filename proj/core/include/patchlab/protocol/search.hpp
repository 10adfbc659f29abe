#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchlab/interventions/patch.hpp"
#include "patchlab/protocol/manifest.hpp"

namespace patchlab {

// Pair-aligned donors and receivers of one side of a split.
struct SplitView {
  SplitTag tag = SplitTag::kSupport;
  std::string hash;
  std::vector<TaskInstance> donors;
  std::vector<TaskInstance> receivers;
};

// `plan` ids are donor ids; receivers follow their donors' pair ids.
SplitView split_view(std::span<const TaskInstance> instances, const SplitPlan& plan, SplitTag tag);

struct SearchSpace {
  std::string family_id;
  std::vector<int> layers;
  std::vector<Site> sites;
  std::vector<std::string> slots;
  std::vector<Channels> channel_sets;
  std::vector<int> head_budgets;  // attention sites; empty means every head
  std::vector<int> ranks;         // the full patch is always a candidate
};

struct Candidate {
  InterfaceKey key;
  Channels channels = Channels::kResid;
  int head_budget = 0;
  std::optional<int> rank;

  std::string label() const;
};

// Every valid combination in declaration order. Residual sites pair only with
// RESID, attention sites only with Q/K/V channel sets.
std::vector<Candidate> enumerate(const SearchSpace& space, const ModelConfig& cfg);

// Earliest, smallest first: lower layer, site order, smaller head budget,
// smaller rank (full last).
bool prefer(const Candidate& a, const Candidate& b);

struct ScoredCandidate {
  Candidate candidate;
  std::vector<std::vector<int>> heads_per_model;  // empty lists mean every head
  std::vector<double> per_model;
  double score = 0.0;
};

struct SearchResult {
  std::vector<ScoredCandidate> ranked;  // best first
  ScoredCandidate selected;
  SearchLedger ledger;
};

// Patch at a candidate interface, compiled from support donors.
struct CandidatePatches {
  CompiledPatch compiled;
  CompiledPatch centered;
};

CandidatePatches compile_candidate(const Weights& w, const InterfaceKey& key, Channels channels,
                                   std::optional<int> rank, const SplitView& support);

// Per-instance specs writing a patch into receivers.
std::vector<std::vector<InterventionSpec>> patch_specs(const Weights& w, const CompiledPatch& patch,
                                                       std::span<const TaskInstance> receivers, const SplitView& view,
                                                       Condition condition);

// Exhaustive scan: each candidate's support metric is the mean over models of
// support-receiver route_acc under its compiled patch.
SearchResult support_search(const SearchSpace& space, std::span<const Weights> models, const SplitView& support,
                            double multiplicity_delta = 0.01);

}  // namespace patchlab
