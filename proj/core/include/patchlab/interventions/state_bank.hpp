#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchlab/model/transformer.hpp"
#include "patchlab/tasks/tasks.hpp"

namespace patchlab {

enum class Condition { kDonor, kReceiver, kClean, kCorrupt, kCompiled, kCentered };
enum class SplitTag { kSupport, kQuery };

std::string_view to_string(Condition c);
std::string_view to_string(SplitTag s);

struct Provenance {
  SplitTag split = SplitTag::kSupport;
  Condition condition = Condition::kDonor;
  std::string split_hash;
};

// A set of interface keys sharing one channel set. Residual interfaces hold
// one key; KV/QKV interfaces usually span several layers.
struct Interface {
  std::vector<InterfaceKey> keys;
  Channels channels = Channels::kResid;

  std::vector<Address> resolve(const SlotMap& slots, const ModelConfig& cfg) const;
  // Splits a flat vector list (resolve order) into one spec per key.
  std::vector<InterventionSpec> specs(std::span<const Tensor> vectors, const SlotMap& slots, const ModelConfig& cfg,
                                      WriteMode mode = WriteMode::kReplace) const;
  std::string describe() const;

  friend bool operator==(const Interface&, const Interface&) = default;
};

Interface resid_interface(const InterfaceKey& key);

// Every K/V (or Q/K/V) read downstream of a residual interface at the same
// slots: layers >= l for RESID_BLOCK, layers > l for sublayer outputs. Empty
// when nothing downstream exists.
Interface downstream_attention(const InterfaceKey& resid_key, Channels channels, const ModelConfig& cfg,
                               std::optional<std::vector<int>> heads = std::nullopt);

struct BankEntry {
  int instance_id = 0;
  int pair_id = 0;
  Route route = Route::kNone;
  std::vector<Tensor> vectors;  // resolve order
};

// Captured states, one entry per instance.
struct StateBank {
  Interface iface;
  Provenance provenance;
  std::vector<BankEntry> entries;

  std::size_t n_vectors() const { return entries.empty() ? 0 : entries.front().vectors.size(); }
};

// Runs every instance (with optional per-instance interventions, e.g. a
// condition patch) and records the post-write states at `iface`.
StateBank capture(const Weights& w, std::span<const TaskInstance> instances, const Interface& iface,
                  Provenance provenance, std::span<const std::vector<InterventionSpec>> conditions = {});

// Per-instance spec lists from a bank aligned with `instances`.
std::vector<std::vector<InterventionSpec>> bank_specs(const StateBank& bank, std::span<const TaskInstance> instances,
                                                      const ModelConfig& cfg, WriteMode mode = WriteMode::kReplace);

// Concatenates per-instance spec lists.
std::vector<std::vector<InterventionSpec>> combine(std::span<const std::vector<std::vector<InterventionSpec>>> parts);

}  // namespace patchlab
