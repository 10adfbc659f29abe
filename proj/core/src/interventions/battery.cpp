#include "patchlab/interventions/battery.hpp"

#include <algorithm>

#include "patchlab/error.hpp"
#include "patchlab/metrics/metrics.hpp"

namespace patchlab {

int route_readout(const Tensor& logits, const TaskInstance& inst) {
  const auto row = static_cast<std::size_t>(inst.answer_position());
  if (inst.route_answers.empty()) return argmax_row(logits, row);
  int best = inst.route_answers.front();
  for (int tok : inst.route_answers) {
    const double v = logits.at(row, static_cast<std::size_t>(tok));
    const double b = logits.at(row, static_cast<std::size_t>(best));
    if (v > b || (v == b && tok < best)) best = tok;
  }
  return best;
}

RoutingEval evaluate_routing(const Weights& w, std::span<const TaskInstance> instances,
                             std::span<const std::vector<InterventionSpec>> specs) {
  require(specs.empty() || specs.size() == instances.size(), ErrorCode::kInvalidArgument,
          "one spec list per instance needed");
  require(!instances.empty(), ErrorCode::kInvalidArgument, "no instances to evaluate");
  std::vector<SequenceRequest> reqs;
  reqs.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    reqs.push_back({instances[i].tokens, instances[i].slots, specs.empty() ? std::vector<InterventionSpec>{} : specs[i], {}});
  }
  auto results = forward_batch(w, reqs);
  RoutingEval out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.predictions.push_back(route_readout(results[i].logits, instances[i]));
    out.free_predictions.push_back(argmax_row(results[i].logits, static_cast<std::size_t>(instances[i].answer_position())));
    out.logits.push_back(std::move(results[i].logits));
  }
  out.correct = route_correct(out.predictions, instances);
  out.route_acc = mean(out.correct);
  out.answer_acc = mean(route_correct(out.free_predictions, instances));
  return out;
}

Tensor apply(const Weights& w, const TaskInstance& instance, std::span<const InterventionSpec> specs) {
  return forward(w, instance.tokens, instance.slots, specs).logits;
}

const BatteryRow& Table2::row(const std::string& condition) const {
  for (const auto& r : rows) {
    if (r.condition == condition) return r;
  }
  fail(ErrorCode::kIncompleteReport, "battery has no row '" + condition + "'");
}

const std::vector<std::string>& table2_conditions() {
  static const std::vector<std::string> names = {
      "receiver", "donor", "compiled", "centered", "compiled_K<-centered", "compiled_V<-centered",
      "compiled_KV<-centered", "centered_KV<-compiled"};
  return names;
}

namespace {

// Largest logit difference over positions outside the interface slots; the
// slot positions' own logits are not part of what downstream positions read.
double max_logit_gap(const RoutingEval& a, const RoutingEval& b, std::span<const TaskInstance> instances,
                     const InterfaceKey& key) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.logits.size(); ++i) {
    std::vector<int> skip;
    for (const auto& s : key.slots) skip.push_back(resolve_slot(s, instances[i].slots));
    const auto rows = a.logits[i].dim(0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (std::find(skip.begin(), skip.end(), static_cast<int>(r)) != skip.end()) continue;
      gap = std::max(gap, (a.logits[i].mat().row(static_cast<Eigen::Index>(r)) -
                           b.logits[i].mat().row(static_cast<Eigen::Index>(r)))
                              .cwiseAbs()
                              .maxCoeff());
    }
  }
  return gap;
}

Interface with_channels(Interface iface, Channels ch) {
  iface.channels = ch;
  return iface;
}

}  // namespace

Table2 battery_table2(const Weights& w, const CompiledPatch& compiled, const CompiledPatch& centered,
                      std::span<const TaskInstance> query_donors, std::span<const TaskInstance> query_receivers,
                      const std::string& query_hash, std::optional<std::vector<int>> kv_heads) {
  require(compiled.cls == PatchClass::kCompiled && centered.cls == PatchClass::kCentered,
          ErrorCode::kInvalidArgument, "battery needs a COMPILED and a CENTERED patch");
  require(!compiled.split_hash.empty() && compiled.split_hash == centered.split_hash, ErrorCode::kLockViolation,
          "battery patches must come from the same support split");
  require(compiled.split_hash != query_hash, ErrorCode::kLockViolation, "battery patches built from query data");
  require(compiled.iface == centered.iface && compiled.iface.channels == Channels::kResid &&
              compiled.iface.keys.size() == 1,
          ErrorCode::kInvalidArgument, "battery needs one residual interface key");
  require(query_donors.size() == query_receivers.size(), ErrorCode::kInvalidArgument,
          "donors and receivers must be pair-aligned");
  for (std::size_t i = 0; i < query_donors.size(); ++i) {
    require(query_donors[i].pair_id == query_receivers[i].pair_id, ErrorCode::kInvalidArgument,
            "donors and receivers must be pair-aligned");
  }

  const auto& cfg = w.config;
  Table2 t;
  t.resid = compiled.iface;
  t.split_hash = compiled.split_hash;
  t.kv = downstream_attention(compiled.iface.keys.front(), Channels::kKV, cfg, kv_heads);
  require(!t.kv.keys.empty(), ErrorCode::kInvalidArgument, "interface has no downstream K/V reads");

  const Provenance q_compiled{SplitTag::kQuery, Condition::kCompiled, query_hash};
  const Provenance q_centered{SplitTag::kQuery, Condition::kCentered, query_hash};
  const auto compiled_specs = bank_specs(patch_bank(compiled, query_receivers, q_compiled), query_receivers, cfg);
  const auto centered_specs = bank_specs(patch_bank(centered, query_receivers, q_centered), query_receivers, cfg);

  auto channel_specs = [&](Channels ch, const std::vector<std::vector<InterventionSpec>>& under, Provenance prov) {
    const auto bank = capture(w, query_receivers, with_channels(t.kv, ch), prov, under);
    return bank_specs(bank, query_receivers, cfg);
  };
  const auto k_centered = channel_specs(Channels::kKOnly, centered_specs, q_centered);
  const auto v_centered = channel_specs(Channels::kVOnly, centered_specs, q_centered);
  const auto kv_centered = channel_specs(Channels::kKV, centered_specs, q_centered);
  const auto kv_compiled = channel_specs(Channels::kKV, compiled_specs, q_compiled);

  using Parts = std::vector<std::vector<std::vector<InterventionSpec>>>;
  const auto run = [&](const Parts& parts) {
    const auto specs = combine(parts);
    return evaluate_routing(w, query_receivers, specs);
  };
  const auto receiver = evaluate_routing(w, query_receivers);
  const auto donor = evaluate_routing(w, query_donors);
  const auto c = run({compiled_specs});
  const auto z = run({centered_specs});
  const auto ck = run({compiled_specs, k_centered});
  const auto cv = run({compiled_specs, v_centered});
  const auto ckv = run({compiled_specs, kv_centered});
  const auto zkv = run({centered_specs, kv_compiled});

  const std::vector<const RoutingEval*> evals = {&receiver, &donor, &c, &z, &ck, &cv, &ckv, &zkv};
  for (std::size_t i = 0; i < evals.size(); ++i) {
    t.rows.push_back({table2_conditions()[i], evals[i]->route_acc, evals[i]->correct});
  }
  const auto& key = compiled.iface.keys.front();
  t.necessity_gap = max_logit_gap(ckv, z, query_receivers, key);
  t.sufficiency_gap = max_logit_gap(zkv, c, query_receivers, key);
  return t;
}

}  // namespace patchlab
