#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchlab/protocol/manifest.hpp"

namespace patchlab {

enum class EvidenceClass { kSingleInterface, kWiderInterface, kPartialControl, kNull };
std::string_view to_string(EvidenceClass c);
EvidenceClass parse_evidence_class(std::string_view text);

// Numbers the classifier reads. Accuracies are on the branch metric; a NaN
// recovery (undefined denominator) counts as failing.
struct ClassifyInput {
  std::optional<double> compiled_recovery;
  std::optional<double> reverse_acc;   // compiled with KV <- centered
  std::optional<double> centered_acc;
  std::vector<std::pair<std::string, double>> control_recoveries;  // applicable controls only
  std::optional<double> widened_recovery;
};

struct Verdict {
  EvidenceClass cls = EvidenceClass::kNull;
  bool sufficiency = false;
  bool necessity = false;
  bool controls = false;
  bool widened = false;
  std::vector<std::string> failing_controls;
};

// SINGLE: compiled recovery >= theta_suff, reverse <= centered + eps_nec and
// every control recovery <= margin. WIDER: the widened scope reaches
// theta_suff while the single interface fails. PARTIAL: some positive
// recovery above the margin without passing either test. NULL otherwise.
Verdict classify(const ClassifyInput& in, const Thresholds& t);

}  // namespace patchlab
