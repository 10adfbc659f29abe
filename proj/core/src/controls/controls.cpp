#include "patchlab/controls/controls.hpp"

#include <Eigen/Cholesky>
#include <numeric>

#include "patchlab/error.hpp"
#include "patchlab/numerics/linalg.hpp"

namespace patchlab {

std::string_view to_string(ControlKind k) {
  switch (k) {
    case ControlKind::kPermute: return "PERMUTE";
    case ControlKind::kTokenShift: return "TOKEN_SHIFT";
    case ControlKind::kWrongLayer: return "WRONG_LAYER";
    case ControlKind::kWrongSite: return "WRONG_SITE";
    case ControlKind::kRandomMatched: return "RANDOM_MATCHED";
    case ControlKind::kPseudoMix: return "PSEUDO_MIX";
    case ControlKind::kSwapAdjacent: return "SWAP_ADJACENT";
    case ControlKind::kFixedDirection: return "FIXED_DIRECTION";
  }
  return "?";
}

std::string ControlSpec::label() const {
  std::string out(to_string(kind));
  if (kind == ControlKind::kTokenShift) out += offset >= 0 ? "+" + std::to_string(offset) : std::to_string(offset);
  if (wrong_key) out += "@" + describe(*wrong_key);
  return out;
}

namespace {

// Stacks address `a` of every entry as rows.
RowMatrix slice(const StateBank& bank, std::size_t a) {
  const auto width = static_cast<Eigen::Index>(bank.entries.front().vectors[a].size());
  RowMatrix x(static_cast<Eigen::Index>(bank.entries.size()), width);
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = bank.entries[i].vectors[a].vec().transpose();
  }
  return x;
}

void store(StateBank& bank, std::size_t a, const RowMatrix& x) {
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    bank.entries[i].vectors[a].vec() = x.row(static_cast<Eigen::Index>(i)).transpose();
  }
}

std::string shifted(const std::string& slot, int offset) {
  if (offset == 0) return slot;
  return slot + (offset > 0 ? "+" : "-") + std::to_string(offset > 0 ? offset : -offset);
}

}  // namespace

StateBank permute_control(const StateBank& bank, Rng& rng) {
  const std::size_t n = bank.entries.size();
  require(n >= 2, ErrorCode::kInvalidArgument, "permutation control needs at least two instances");
  // Uniform derangement by rejection: about e draws on average.
  std::vector<std::size_t> perm(n);
  bool fixed_point = true;
  while (fixed_point) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    fixed_point = false;
    for (std::size_t i = 0; i < n && !fixed_point; ++i) fixed_point = perm[i] == i;
  }
  StateBank out = bank;
  for (std::size_t i = 0; i < n; ++i) out.entries[i].vectors = bank.entries[perm[i]].vectors;
  return out;
}

Interface token_shift_interface(const Interface& iface, int offset) {
  Interface out = iface;
  for (auto& key : out.keys) {
    for (auto& s : key.slots) s = shifted(s, offset);
  }
  return out;
}

InterventionSpec token_shift_control(const InterventionSpec& spec, int offset, const SlotMap& slots,
                                     const ModelConfig& cfg) {
  InterventionSpec out = spec;
  for (auto& s : out.key.slots) s = shifted(s, offset);
  // Surfaces out-of-range shifts as address errors now rather than at run time.
  (void)resolve(out.key, out.channels, slots, cfg);
  return out;
}

Interface wrong_interface(const Interface& iface, const InterfaceKey& wrong) {
  Interface out = iface;
  for (auto& key : out.keys) {
    key.layer = wrong.layer;
    key.site = wrong.site;
  }
  return out;
}

InterventionSpec wrong_interface_control(const InterventionSpec& spec, const InterfaceKey& wrong, const SlotMap& slots,
                                         const ModelConfig& cfg) {
  require(is_resid_site(wrong.site) == is_resid_site(spec.key.site), ErrorCode::kAddress,
          "wrong interface must keep the residual/attention kind of the source");
  InterventionSpec out = spec;
  out.key.layer = wrong.layer;
  out.key.site = wrong.site;
  const auto addrs = resolve(out.key, out.channels, slots, cfg);
  for (std::size_t i = 0; i < addrs.size(); ++i) {
    require(static_cast<int>(out.source[i].size()) == site_width(addrs[i].site, cfg), ErrorCode::kAddress,
            "wrong interface width mismatch");
  }
  return out;
}

StateBank random_matched_states(const StateBank& bank, Rng& rng) {
  require(!bank.entries.empty(), ErrorCode::kInvalidArgument, "random matched states need a non-empty bank");
  StateBank out = bank;
  const auto n = static_cast<double>(bank.entries.size());
  for (std::size_t a = 0; a < bank.n_vectors(); ++a) {
    const RowMatrix x = slice(bank, a);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const RowMatrix xc = x.rowwise() - mu;
    const auto d = x.cols();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    if (x.rows() > 1) cov = (xc.transpose() * xc) / (n - 1.0);
    const double tr = cov.trace();
    RowMatrix draws = RowMatrix::Zero(x.rows(), d);
    if (tr > 0.0) {
      cov.diagonal().array() += kCovarianceShrinkage * tr / static_cast<double>(d);
      const Eigen::LLT<Eigen::MatrixXd> llt(cov);
      require(llt.info() == Eigen::Success, ErrorCode::kNumericDomain, "shrunk covariance is not positive definite");
      const Eigen::MatrixXd l = llt.matrixL();
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::VectorXd z(d);
        for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
        draws.row(i) = (l * z).transpose();
      }
    }
    draws.rowwise() += mu;
    store(out, a, draws);
  }
  return out;
}

StateBank pseudo_mix(const StateBank& bank, Rng& rng) {
  const int k = static_cast<int>(bank.entries.size());
  require(k >= 2, ErrorCode::kInvalidArgument, "pseudo-mix needs at least two instances per slice");
  StateBank out = bank;
  for (std::size_t a = 0; a < bank.n_vectors(); ++a) {
    const Tensor q = random_orthogonal_fixing_ones(k, rng);
    store(out, a, q.mat() * slice(bank, a));
  }
  return out;
}

StateBank swap_adjacent(const StateBank& bank, bool* dropped) {
  require(bank.entries.size() >= 2, ErrorCode::kInvalidArgument, "swap control needs at least two instances");
  StateBank out = bank;
  const bool odd = bank.entries.size() % 2 == 1;
  if (odd) out.entries.pop_back();
  if (dropped) *dropped = odd;
  for (std::size_t i = 0; i + 1 < out.entries.size(); i += 2) {
    std::swap(out.entries[i].vectors, out.entries[i + 1].vectors);
  }
  return out;
}

SteeringAxis steering_axis(const StateBank& a, const StateBank& b) {
  require(!a.entries.empty() && !b.entries.empty(), ErrorCode::kInvalidArgument, "steering axis needs two banks");
  require(a.n_vectors() == 1 && b.n_vectors() == 1, ErrorCode::kInvalidArgument,
          "steering axis needs single-address banks");
  Eigen::VectorXd diff = slice(a, 0).colwise().mean().transpose() - slice(b, 0).colwise().mean().transpose();
  SteeringAxis out;
  out.norm = diff.norm();
  require(out.norm > 0.0 && std::isfinite(out.norm), ErrorCode::kNumericDomain, "steering axis is zero");
  out.axis = Tensor({static_cast<std::size_t>(diff.size())});
  out.axis.vec() = diff / out.norm;
  return out;
}

SteeringAxis random_axis(std::size_t width, Rng& rng) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(width));
  for (auto& v : z) v = rng.normal();
  SteeringAxis out;
  out.norm = z.norm();
  require(out.norm > 0.0, ErrorCode::kNumericDomain, "random axis is zero");
  out.axis = Tensor({width});
  out.axis.vec() = z / out.norm;
  return out;
}

InterventionSpec fixed_direction_steer(const SteeringAxis& axis, double scale, const InterfaceKey& key) {
  require(is_resid_site(key.site) && key.slots.size() == 1, ErrorCode::kInvalidArgument,
          "steering writes one residual slot");
  require(std::isfinite(scale), ErrorCode::kNumericDomain, "steering scale must be finite");
  InterventionSpec spec;
  spec.key = key;
  spec.channels = Channels::kResid;
  spec.mode = WriteMode::kAdd;
  Tensor v = axis.axis;
  v.vec() *= scale;
  spec.source = {std::move(v)};
  return spec;
}

}  // namespace patchlab
