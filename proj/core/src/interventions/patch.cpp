#include "patchlab/interventions/patch.hpp"

#include <algorithm>

#include "patchlab/error.hpp"
#include "patchlab/numerics/linalg.hpp"

namespace patchlab {

std::string_view to_string(PatchClass c) { return c == PatchClass::kCompiled ? "COMPILED" : "CENTERED"; }

const std::vector<Tensor>& CompiledPatch::for_route(Route route) const {
  if (cls == PatchClass::kCentered) return vectors.at(Route::kNone);
  const auto it = vectors.find(route);
  require(it != vectors.end(), ErrorCode::kInvalidArgument,
          "compiled patch has no entry for route " + std::string(to_string(route)));
  return it->second;
}

namespace {

std::vector<Tensor> mean_vectors(const std::vector<const BankEntry*>& entries) {
  std::vector<Tensor> out = entries.front()->vectors;
  for (auto& t : out) t.fill(0.0);
  for (const auto* e : entries) {
    for (std::size_t a = 0; a < out.size(); ++a) out[a].vec() += e->vectors[a].vec();
  }
  for (auto& t : out) t.vec() /= static_cast<double>(entries.size());
  return out;
}

int truncate(std::vector<Tensor>& vectors, int r) {
  const auto width = vectors.front().size();
  RowMatrix m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(width));
  for (std::size_t a = 0; a < vectors.size(); ++a) {
    require(vectors[a].size() == width, ErrorCode::kInvalidArgument, "rank truncation needs equal widths");
    m.row(static_cast<Eigen::Index>(a)) = vectors[a].vec().transpose();
  }
  const auto svd = truncated_svd(Tensor::from(m), r);
  const auto approx = svd.approximation.mat();
  for (std::size_t a = 0; a < vectors.size(); ++a) {
    vectors[a].vec() = approx.row(static_cast<Eigen::Index>(a)).transpose();
  }
  return svd.achieved_rank;
}

}  // namespace

CompiledPatch compile_patch(const StateBank& bank, PatchClass cls, std::optional<int> rank) {
  require(bank.provenance.split == SplitTag::kSupport, ErrorCode::kLockViolation,
          "patches may only be compiled from support data");
  require(bank.provenance.condition == Condition::kDonor || bank.provenance.condition == Condition::kClean,
          ErrorCode::kInvalidArgument, "patches are compiled from donor or clean banks");
  require(!bank.entries.empty(), ErrorCode::kInvalidArgument, "cannot compile a patch from an empty bank");
  require(!rank || *rank >= 0, ErrorCode::kInvalidArgument, "patch rank must be non-negative");

  std::map<Route, std::vector<const BankEntry*>> by_route;
  for (const auto& e : bank.entries) by_route[e.route].push_back(&e);

  CompiledPatch patch;
  patch.iface = bank.iface;
  patch.cls = cls;
  patch.rank = rank;
  patch.split_hash = bank.provenance.split_hash;
  std::map<Route, std::vector<Tensor>> route_means;
  for (const auto& [route, entries] : by_route) route_means[route] = mean_vectors(entries);

  if (cls == PatchClass::kCompiled) {
    patch.vectors = std::move(route_means);
  } else {
    std::vector<Tensor> grand = route_means.begin()->second;
    for (auto& t : grand) t.fill(0.0);
    for (const auto& [route, vs] : route_means) {
      for (std::size_t a = 0; a < grand.size(); ++a) grand[a].vec() += vs[a].vec();
    }
    for (auto& t : grand) t.vec() /= static_cast<double>(route_means.size());
    patch.vectors[Route::kNone] = std::move(grand);
  }

  patch.achieved_rank = 0;
  if (rank) {
    for (auto& [route, vs] : patch.vectors) patch.achieved_rank = std::max(patch.achieved_rank, truncate(vs, *rank));
  } else {
    for (const auto& [route, vs] : patch.vectors) {
      RowMatrix m(static_cast<Eigen::Index>(vs.size()), static_cast<Eigen::Index>(vs.front().size()));
      for (std::size_t a = 0; a < vs.size(); ++a) m.row(static_cast<Eigen::Index>(a)) = vs[a].vec().transpose();
      patch.achieved_rank = std::max(patch.achieved_rank, numerical_rank(Tensor::from(m)));
    }
  }
  return patch;
}

StateBank patch_bank(const CompiledPatch& patch, std::span<const TaskInstance> instances, Provenance provenance) {
  StateBank bank;
  bank.iface = patch.iface;
  bank.provenance = std::move(provenance);
  for (const auto& inst : instances) {
    bank.entries.push_back({inst.id, inst.pair_id, inst.route, patch.for_route(inst.route)});
  }
  return bank;
}

int max_patch_rank(const CompiledPatch& patch) {
  const auto& vs = patch.vectors.begin()->second;
  return static_cast<int>(std::min(vs.size(), vs.front().size()));
}

RankSweep rank_sweep(const std::function<double(std::optional<int>)>& eval, int max_rank, double delta,
                     SplitTag eval_split) {
  require(eval_split == SplitTag::kSupport, ErrorCode::kLockViolation, "rank sweeps run on support data only");
  require(max_rank >= 0, ErrorCode::kInvalidArgument, "max_rank must be non-negative");
  RankSweep out;
  out.full_metric = eval(std::nullopt);
  out.r_star = -1;
  for (int r = 0; r <= max_rank; ++r) {
    out.metrics.push_back(eval(r));
    if (out.r_star < 0 && out.metrics.back() >= out.full_metric - delta) out.r_star = r;
  }
  // Full rank reproduces the untruncated patch, so the scan always succeeds
  // up to evaluation noise; fall back to max_rank otherwise.
  if (out.r_star < 0) out.r_star = max_rank;
  return out;
}

}  // namespace patchlab
