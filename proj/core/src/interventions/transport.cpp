#include "patchlab/interventions/transport.hpp"

#include <map>

#include "patchlab/error.hpp"

namespace patchlab {

std::string_view to_string(Scope s) {
  switch (s) {
    case Scope::kTok1: return "TOK1";
    case Scope::kTokPos: return "TOKPOS";
    case Scope::kCtrlOnly: return "CTRL_ONLY";
    case Scope::kPromptWide: return "PROMPT_WIDE";
  }
  return "?";
}

Scope parse_scope(std::string_view text) {
  for (auto s : {Scope::kTok1, Scope::kTokPos, Scope::kCtrlOnly, Scope::kPromptWide}) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::kInvalidArgument, "unknown transport scope '" + std::string(text) + "'");
}

std::vector<std::string> scope_slots(Scope scope, const TaskInstance& inst) {
  std::vector<std::string> payload;
  for (int j = 1; inst.slots.contains("payload_" + std::to_string(j)); ++j) payload.push_back("payload_" + std::to_string(j));
  switch (scope) {
    case Scope::kTok1:
      require(!payload.empty(), ErrorCode::kAddress, "TOK1 scope needs a payload slot");
      return {payload.front()};
    case Scope::kTokPos:
      require(!payload.empty(), ErrorCode::kAddress, "TOKPOS scope needs payload slots");
      return payload;
    case Scope::kCtrlOnly:
      require(inst.slots.contains("ctrl"), ErrorCode::kAddress, "instance has no ctrl slot");
      return {"ctrl"};
    case Scope::kPromptWide: {
      std::vector<std::string> out;
      for (std::size_t p = 0; p < inst.tokens.size(); ++p) out.push_back("pos:" + std::to_string(p));
      return out;
    }
  }
  return {};
}

Interface transport_interface(Scope scope, Channels channels, const TaskInstance& like, const ModelConfig& cfg,
                              std::vector<int> layers) {
  require(channels != Channels::kResid, ErrorCode::kInvalidArgument, "transport uses attention channel sets");
  if (layers.empty()) {
    for (int l = 0; l < cfg.n_layers; ++l) layers.push_back(l);
  }
  Interface iface;
  iface.channels = channels;
  const auto slots = scope_slots(scope, like);
  for (int l : layers) iface.keys.push_back({l, Site::kK, std::nullopt, slots});
  return iface;
}

std::vector<Rollout> rollouts(const Weights& w, std::span<const TaskInstance> instances,
                              std::span<const std::vector<InterventionSpec>> specs) {
  require(specs.empty() || specs.size() == instances.size(), ErrorCode::kInvalidArgument,
          "one spec list per instance needed");
  require(!instances.empty(), ErrorCode::kInvalidArgument, "no instances to roll out");
  // Batch by rollout length; generate_batch needs one step count.
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < instances.size(); ++i) by_len[instances[i].target.size()].push_back(i);
  std::vector<Rollout> out(instances.size());
  for (const auto& [n, idx] : by_len) {
    std::vector<GenerationRequest> reqs;
    for (auto i : idx) {
      reqs.push_back({instances[i].tokens, instances[i].slots,
                      specs.empty() ? std::vector<InterventionSpec>{} : specs[i]});
    }
    auto gen = generate_batch(w, reqs, static_cast<int>(n));
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = std::move(gen[j]);
  }
  return out;
}

std::vector<Rollout> trajectory_transport(const Weights& w, const StateBank& clean_bank,
                                          std::span<const TaskInstance> corrupted,
                                          std::span<const std::vector<InterventionSpec>> extra) {
  require(clean_bank.entries.size() == corrupted.size(), ErrorCode::kInvalidArgument,
          "clean bank and corrupted instances differ in length");
  for (std::size_t i = 0; i < corrupted.size(); ++i) {
    require(clean_bank.entries[i].pair_id == corrupted[i].pair_id, ErrorCode::kInvalidArgument,
            "clean bank is not aligned with its corrupted twins");
  }
  auto specs = bank_specs(clean_bank, corrupted, w.config);
  if (!extra.empty()) {
    const std::vector<std::vector<std::vector<InterventionSpec>>> parts = {
        specs, std::vector<std::vector<InterventionSpec>>(extra.begin(), extra.end())};
    specs = combine(parts);
  }
  return rollouts(w, corrupted, specs);
}

}  // namespace patchlab
