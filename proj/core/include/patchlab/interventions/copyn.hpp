#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchlab/interventions/transport.hpp"
#include "patchlab/tasks/vocab.hpp"

namespace patchlab {

// gen_tok_acc_full under each condition on corrupted query prompts, scored
// against the clean continuation. TOK1, TOKPOS and swap are corrupt-only.
struct CopyNConditions {
  int n = 0;
  double clean = 0.0;
  double clean_exact = 0.0;
  double corrupt = 0.0;
  double compiled = 0.0;   // L0 RESID_BLOCK prompt-wide <- clean twin
  double centered = 0.0;   // same interface <- support mean of clean states
  double centered_kv = 0.0;
  double centered_qkv = 0.0;
  double tok1 = 0.0;
  double tokpos = 0.0;
  double swap = 0.0;
  bool swap_dropped = false;

  double replace_minus_swap() const { return tokpos - swap; }
};

struct CopyNSplit {
  std::vector<TaskInstance> support_clean;
  std::vector<TaskInstance> query_clean;
  std::vector<TaskInstance> query_corrupt;
  std::string support_hash;
  std::string query_hash;
};

// `count` clean copy-n prompts, the first n_support kept as support; query
// prompts get their default fixed-corrupt slots resampled.
CopyNSplit copyn_split(int n, int count, int n_support, const Vocab& vocab, Rng& rng, int max_positions);

CopyNConditions copyn_conditions(const Weights& w, const CopyNSplit& split);

}  // namespace patchlab
