#pragma once

#include <string>
#include <vector>

#include "patchlab/interventions/state_bank.hpp"
#include "patchlab/numerics/rng.hpp"

namespace patchlab {

enum class ControlKind {
  kPermute,
  kTokenShift,
  kWrongLayer,
  kWrongSite,
  kRandomMatched,
  kPseudoMix,
  kSwapAdjacent,
  kFixedDirection,
};

std::string_view to_string(ControlKind k);

struct ControlSpec {
  ControlKind kind = ControlKind::kPermute;
  std::string matched_to;  // positive condition this control is matched to
  int offset = 0;          // token shift
  std::optional<InterfaceKey> wrong_key;
  std::uint64_t seed = 0;
  std::string label() const;
};

// Reassigns states across entries by a uniform derangement.
StateBank permute_control(const StateBank& bank, Rng& rng);

// Same source written `offset` positions away from each slot.
InterventionSpec token_shift_control(const InterventionSpec& spec, int offset, const SlotMap& slots,
                                     const ModelConfig& cfg);
Interface token_shift_interface(const Interface& iface, int offset);

// Same source at another layer and/or site. The wrong key must accept the
// source widths.
InterventionSpec wrong_interface_control(const InterventionSpec& spec, const InterfaceKey& wrong, const SlotMap& slots,
                                         const ModelConfig& cfg);
Interface wrong_interface(const Interface& iface, const InterfaceKey& wrong);

inline constexpr double kCovarianceShrinkage = 1e-6;

// Gaussian draws with each address's bank mean and covariance, shrunk by
// 1e-6 tr(S)/d on the diagonal.
StateBank random_matched_states(const StateBank& bank, Rng& rng);

// Per address, rows X (one per entry) become Q X with Q orthogonal, Q 1 = 1
// and Q != I: column means and centered Gram are kept, identities broken.
StateBank pseudo_mix(const StateBank& bank, Rng& rng);

// Exchanges states between entries (2i, 2i + 1); an odd last entry is
// dropped and reported through `dropped`.
StateBank swap_adjacent(const StateBank& bank, bool* dropped = nullptr);

struct SteeringAxis {
  Tensor axis;    // unit norm
  double norm = 0.0;  // norm of the raw mean difference
};

// Unit axis from mean(a) - mean(b) over single-address banks.
SteeringAxis steering_axis(const StateBank& a, const StateBank& b);
// Random unit axis of the same width.
SteeringAxis random_axis(std::size_t width, Rng& rng);

// Additive x <- x + scale * axis at a single-slot residual key.
InterventionSpec fixed_direction_steer(const SteeringAxis& axis, double scale, const InterfaceKey& key);

}  // namespace patchlab
