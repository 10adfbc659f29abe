#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/interventions/heads.hpp"
#include "patchlab/model/interface.hpp"

namespace patchlab {

enum class ManifestStatus { kOpen, kLocked, kConsumed };
std::string_view to_string(ManifestStatus s);

struct Thresholds {
  double theta_suff = 0.9;
  double eps_nec = 0.05;
  double control_margin = 0.5;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct Selection {
  InterfaceKey key;  // heads resolved per model below
  Channels channels = Channels::kResid;
  std::optional<int> rank;
  int head_budget = 0;  // 0 selects every head
  std::vector<std::vector<int>> heads_per_model;
  double support_score = 0.0;

  friend bool operator==(const Selection&, const Selection&) = default;
};

struct LedgerEntry {
  std::string candidate;
  double score = 0.0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct SearchLedger {
  std::map<std::string, int> axis_counts;
  int n_candidates = 0;
  int total_evaluations = 0;
  double multiplicity_delta = 0.01;
  std::vector<LedgerEntry> candidates;  // enumeration order

  friend bool operator==(const SearchLedger&, const SearchLedger&) = default;
};

struct ManifestSeeds {
  std::vector<std::uint64_t> models;
  std::uint64_t data = 0;
  std::uint64_t control = 0;

  friend bool operator==(const ManifestSeeds&, const ManifestSeeds&) = default;
};

struct ManifestContent {
  std::string branch_id;
  std::string family_id;
  std::string config_hash;
  std::string support_hash;
  std::string query_hash;
  std::optional<Selection> selection;
  Thresholds thresholds;
  ManifestSeeds seeds;
  SearchLedger ledger;
  // Support-ranked heads per model, most damaging first.
  std::vector<std::vector<HeadId>> head_rankings;
  int rank_star = -1;
  // Interpretation flags recorded with the lock (e.g. kv_heads = ALL).
  std::map<std::string, std::string> notes;

  friend bool operator==(const ManifestContent&, const ManifestContent&) = default;
};

// Canonical JSON (sorted keys, no whitespace) of the content; this is what
// the manifest hash covers. Status and the hash itself are excluded.
std::string canonical_json(const ManifestContent& content);
std::string manifest_hash(const ManifestContent& content);

// OPEN -> LOCKED -> CONSUMED. Content can only change while OPEN.
class LockManifest {
 public:
  explicit LockManifest(ManifestContent draft = {});

  const ManifestContent& content() const noexcept { return content_; }
  ManifestStatus status() const noexcept { return status_; }
  // Empty while OPEN.
  const std::string& hash() const noexcept { return hash_; }

  // Mutation after freeze is a lock violation.
  void edit(const std::function<void(ManifestContent&)>& fn);
  // Needs a selection; freezing a non-OPEN manifest is a state error.
  void freeze();
  // LOCKED -> CONSUMED. OPEN or CONSUMED manifests raise lock violations.
  void consume();
  // OPEN manifests raise lock violations.
  void require_locked(std::string_view action) const;

  // Full document: {"content", "status", "manifest_hash"}.
  std::string to_json() const;
  // Re-verifies the hash of LOCKED / CONSUMED documents; a mismatch means
  // the file was edited after freeze and raises a lock violation.
  static LockManifest from_json(const std::string& text);

 private:
  ManifestContent content_;
  ManifestStatus status_ = ManifestStatus::kOpen;
  std::string hash_;
};

void save_manifest(const LockManifest& m, const std::string& path);
LockManifest load_manifest(const std::string& path);

}  // namespace patchlab
