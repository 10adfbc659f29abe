#pragma once

#include <array>
#include <optional>
#include <string_view>

// Large-model values carried in the `reference` column of reports. They are
// never used as targets.
namespace patchlab::reference {

struct RowValue {
  std::string_view condition;
  double mean;
  double std;
};

// Triop battery at layer-0 block@ctrl.
inline constexpr std::array<RowValue, 8> kTriopBattery = {{
    {"receiver", 0.333, 0.000},
    {"donor", 0.824, 0.030},
    {"compiled", 0.799, 0.040},
    {"centered", 0.541, 0.038},
    {"compiled_K<-centered", 0.723, 0.046},
    {"compiled_V<-centered", 0.611, 0.027},
    {"compiled_KV<-centered", 0.541, 0.038},
    {"centered_KV<-compiled", 0.799, 0.040},
}};

// Site comparison at the preferred depth.
inline constexpr double kBlockAtCtrl = 0.799;
inline constexpr double kMlpAtCtrl = 0.789;
inline constexpr double kAttnAtCtrl = 0.344;

inline constexpr int kTriopRankStar = 1;
inline constexpr double kRankDelta = 0.01;

// Head specificity.
inline constexpr double kSelectedHeadDelta = -0.0402;
inline constexpr double kRandomHeadDeltaMean = -0.0042;
inline constexpr double kRandomHeadDeltaStd = 0.0060;
inline constexpr int kRandomHeadSets = 60;

// Add/sub learned baselines on the shared split.
inline constexpr double kAddSubCompiled = 0.9113;
inline constexpr double kAddSubInversion = 0.9422;
inline constexpr double kAddSubLowRank = 0.5000;
inline constexpr double kAddSubCtrlTuning = 0.9590;
// Triop learned baselines at an equalised 800-step budget.
inline constexpr double kTriopCompiled800 = 0.7979;
inline constexpr double kTriopLowRank = 0.3336;

struct RelocationRow {
  std::string_view slot;
  int support;
  int steps;
  long cost;
  double acc;
};

inline constexpr double kRelocationThreshold = 0.9113;
inline constexpr std::array<RelocationRow, 4> kRelocation = {{
    {"ctrl", 16, 200, 3200, 0.9128},
    {"b", 16, 200, 3200, 0.9225},
    {"a", 8, 800, 6400, 0.9128},
    {"eq", 32, 800, 25600, 0.9368},
}};

struct CopyRow {
  int n;
  double compiled;
  double centered_kv;
  double centered_qkv;
};

inline constexpr std::array<CopyRow, 5> kCopyN = {{
    {2, 0.855, 0.727, 0.817},
    {3, 0.772, 0.586, 0.720},
    {5, 0.661, 0.447, 0.598},
    {8, 0.671, 0.441, 0.581},
    {10, 0.700, 0.504, 0.650},
}};

// Steering on copy12.
inline constexpr double kSteeredTokAcc = 0.6899;
inline constexpr double kRandomAxisTokAcc = 0.6935;
inline constexpr double kRandomAxisTokAccStd = 0.0035;

// Cross-task audit and shortlist arithmetic.
inline constexpr double kAuditDonor = 0.7910;
inline constexpr double kAuditReceiver = 0.0;
inline constexpr double kAuditCompiled = 0.0820;
inline constexpr double kAuditRecovery = 0.1037;
inline constexpr double kOracleFullGain = 0.422;
inline constexpr double kOracleAt4Gain = 0.372;
inline constexpr double kOracleAt4Fraction = 0.882;
inline constexpr int kVerifyPositiveRuns = 82;

inline std::optional<double> triop_battery(std::string_view condition) {
  for (const auto& r : kTriopBattery) {
    if (r.condition == condition) return r.mean;
  }
  return std::nullopt;
}

inline std::optional<CopyRow> copy_row(int n) {
  for (const auto& r : kCopyN) {
    if (r.n == n) return r;
  }
  return std::nullopt;
}

}  // namespace patchlab::reference
