#include "patchlab/protocol/classify.hpp"

#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

std::string_view to_string(EvidenceClass c) {
  switch (c) {
    case EvidenceClass::kSingleInterface: return "SINGLE_INTERFACE_TRANSFER";
    case EvidenceClass::kWiderInterface: return "WIDER_INTERFACE_TRANSFER";
    case EvidenceClass::kPartialControl: return "PARTIAL_CONTROL";
    case EvidenceClass::kNull: return "NULL";
  }
  return "?";
}

EvidenceClass parse_evidence_class(std::string_view text) {
  for (auto c : {EvidenceClass::kSingleInterface, EvidenceClass::kWiderInterface, EvidenceClass::kPartialControl,
                 EvidenceClass::kNull}) {
    if (text == to_string(c)) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown evidence class '" + std::string(text) + "'");
}

namespace {

bool at_least(double v, double threshold) { return !std::isnan(v) && v >= threshold; }

}  // namespace

Verdict classify(const ClassifyInput& in, const Thresholds& t) {
  require(in.compiled_recovery.has_value(), ErrorCode::kIncompleteReport, "report lacks the compiled recovery");
  require(in.reverse_acc.has_value(), ErrorCode::kIncompleteReport, "report lacks the reverse necessity row");
  require(in.centered_acc.has_value(), ErrorCode::kIncompleteReport, "report lacks the centered row");
  require(!in.control_recoveries.empty(), ErrorCode::kIncompleteReport, "report lacks control rows");

  Verdict v;
  v.sufficiency = at_least(*in.compiled_recovery, t.theta_suff);
  v.necessity = !std::isnan(*in.reverse_acc) && *in.reverse_acc <= *in.centered_acc + t.eps_nec;
  v.controls = true;
  for (const auto& [name, r] : in.control_recoveries) {
    if (std::isnan(r) || r > t.control_margin) {
      v.controls = false;
      v.failing_controls.push_back(name);
    }
  }
  v.widened = in.widened_recovery && at_least(*in.widened_recovery, t.theta_suff);

  const bool single = v.sufficiency && v.necessity && v.controls;
  if (single) {
    v.cls = EvidenceClass::kSingleInterface;
  } else if (v.widened && !v.sufficiency) {
    v.cls = EvidenceClass::kWiderInterface;
  } else if (*in.compiled_recovery > t.control_margin ||
             (in.widened_recovery && *in.widened_recovery > t.control_margin)) {
    v.cls = EvidenceClass::kPartialControl;
  } else {
    v.cls = EvidenceClass::kNull;
  }
  return v;
}

}  // namespace patchlab
