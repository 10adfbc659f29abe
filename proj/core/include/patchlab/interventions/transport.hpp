#pragma once

#include <vector>

#include "patchlab/interventions/state_bank.hpp"
#include "patchlab/metrics/metrics.hpp"

namespace patchlab {

// TOK1: first payload slot. TOKPOS: every payload slot. CTRL_ONLY: ctrl.
// PROMPT_WIDE: every prompt position, ctrl and eq included.
enum class Scope { kTok1, kTokPos, kCtrlOnly, kPromptWide };

std::string_view to_string(Scope s);
Scope parse_scope(std::string_view text);

std::vector<std::string> scope_slots(Scope scope, const TaskInstance& inst);

// Attention channels at the scope slots in each listed layer (all layers
// when `layers` is empty).
Interface transport_interface(Scope scope, Channels channels, const TaskInstance& like, const ModelConfig& cfg,
                              std::vector<int> layers = {});

// Greedy rollouts of target length under per-instance spec lists.
std::vector<Rollout> rollouts(const Weights& w, std::span<const TaskInstance> instances,
                              std::span<const std::vector<InterventionSpec>> specs = {});

// Writes each clean-twin entry of `clean_bank` into the matching corrupted
// instance (aligned by index and pair id), plus any extra per-instance specs,
// then rolls out. Scoring is against the clean target carried by the instance.
std::vector<Rollout> trajectory_transport(const Weights& w, const StateBank& clean_bank,
                                          std::span<const TaskInstance> corrupted,
                                          std::span<const std::vector<InterventionSpec>> extra = {});

}  // namespace patchlab
