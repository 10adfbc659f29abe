#include "patchlab/interventions/copyn.hpp"

#include "patchlab/controls/controls.hpp"
#include "patchlab/error.hpp"
#include "patchlab/interventions/patch.hpp"

namespace patchlab {

CopyNSplit copyn_split(int n, int count, int n_support, const Vocab& vocab, Rng& rng, int max_positions) {
  require(n_support > 0 && n_support < count, ErrorCode::kInvalidArgument, "copy split needs support and query prompts");
  const auto clean = gen_copyN(n, count, vocab, rng, max_positions);
  const auto slots = default_corrupt_slots(n);
  CopyNSplit out;
  std::vector<int> sup_ids;
  std::vector<int> qry_ids;
  for (int i = 0; i < count; ++i) {
    const auto& inst = clean[static_cast<std::size_t>(i)];
    if (i < n_support) {
      out.support_clean.push_back(inst);
      sup_ids.push_back(inst.id);
    } else {
      out.query_clean.push_back(inst);
      out.query_corrupt.push_back(corrupt(inst, slots, vocab, rng));
      qry_ids.push_back(inst.id);
    }
  }
  out.support_hash = hash_ids(sup_ids);
  out.query_hash = hash_ids(qry_ids);
  return out;
}

CopyNConditions copyn_conditions(const Weights& w, const CopyNSplit& split) {
  const auto& cfg = w.config;
  const auto& qc = split.query_clean;
  const auto& qb = split.query_corrupt;
  require(!qc.empty() && !split.support_clean.empty(), ErrorCode::kInvalidArgument, "empty copy split");
  CopyNConditions out;
  out.n = static_cast<int>(qc.front().target.size());

  std::vector<Rollout> targets;
  TargetMask corrupt_mask;
  for (std::size_t i = 0; i < qc.size(); ++i) {
    targets.push_back(qc[i].target);
    corrupt_mask.push_back(corrupt_only_indices(qb[i]));
  }
  const auto acc = [&](const std::vector<Rollout>& r) { return gen_tok_acc_full(r, targets); };
  const auto acc_co = [&](const std::vector<Rollout>& r) { return gen_tok_acc_full(r, targets, corrupt_mask); };
  const Provenance qclean{SplitTag::kQuery, Condition::kClean, split.query_hash};

  const auto clean_runs = rollouts(w, qc);
  out.clean = acc(clean_runs);
  out.clean_exact = gen_exact_full(clean_runs, targets);
  out.corrupt = acc(rollouts(w, qb));

  const InterfaceKey block{0, Site::kResidBlock, std::nullopt, scope_slots(Scope::kPromptWide, qc.front())};
  const Interface wide = resid_interface(block);
  const auto support_bank =
      capture(w, split.support_clean, wide, {SplitTag::kSupport, Condition::kClean, split.support_hash});
  const auto centered = compile_patch(support_bank, PatchClass::kCentered);
  const auto base =
      bank_specs(patch_bank(centered, qb, {SplitTag::kQuery, Condition::kCentered, split.query_hash}), qb, cfg);
  out.compiled = acc(trajectory_transport(w, capture(w, qc, wide, qclean), qb));
  out.centered = acc(rollouts(w, qb, base));

  const auto kv = transport_interface(Scope::kPromptWide, Channels::kKV, qc.front(), cfg);
  const auto qkv = transport_interface(Scope::kPromptWide, Channels::kQKV, qc.front(), cfg);
  out.centered_kv = acc(trajectory_transport(w, capture(w, qc, kv, qclean), qb, base));
  out.centered_qkv = acc(trajectory_transport(w, capture(w, qc, qkv, qclean), qb, base));

  const auto tok1 = transport_interface(Scope::kTok1, Channels::kKV, qc.front(), cfg);
  const auto tokpos = transport_interface(Scope::kTokPos, Channels::kKV, qc.front(), cfg);
  const auto tokpos_bank = capture(w, qc, tokpos, qclean);
  out.tok1 = acc_co(trajectory_transport(w, capture(w, qc, tok1, qclean), qb));
  out.tokpos = acc_co(trajectory_transport(w, tokpos_bank, qb));

  // Swap pairs entries; an odd final prompt is left out of the swap score.
  const auto swapped = swap_adjacent(tokpos_bank, &out.swap_dropped);
  const std::size_t m = swapped.entries.size();
  const std::vector<TaskInstance> qb_even(qb.begin(), qb.begin() + static_cast<std::ptrdiff_t>(m));
  const std::vector<Rollout> t_even(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(m));
  const TargetMask mask_even(corrupt_mask.begin(), corrupt_mask.begin() + static_cast<std::ptrdiff_t>(m));
  out.swap = gen_tok_acc_full(trajectory_transport(w, swapped, qb_even), t_even, mask_even);
  return out;
}

}  // namespace patchlab
