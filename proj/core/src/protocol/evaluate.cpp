#include "patchlab/protocol/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "patchlab/controls/controls.hpp"
#include "patchlab/error.hpp"
#include "patchlab/metrics/reference.hpp"

namespace patchlab {

using nlohmann::json;

namespace {

double support_metric(const Weights& w, const Selection& sel, const std::vector<int>& heads, std::optional<int> rank,
                      const SplitView& support) {
  InterfaceKey key = sel.key;
  if (sel.head_budget > 0) key.heads = heads;
  const auto patches = compile_candidate(w, key, sel.channels, rank, support);
  const auto specs = patch_specs(w, patches.compiled, support.receivers, support, Condition::kCompiled);
  return evaluate_routing(w, support.receivers, specs).route_acc;
}

// NaN when the donor does not beat the receiver.
double safe_recovery(double condition, double receiver, double donor) {
  if (!(donor > receiver)) return std::nan("");
  return recovery_fraction(condition, receiver, donor);
}

bool shift_applicable(std::span<const TaskInstance> instances, const InterfaceKey& key, int offset) {
  for (const auto& inst : instances) {
    for (const auto& s : key.slots) {
      const int p = resolve_slot(s, inst.slots) + offset;
      if (p < 0 || p >= static_cast<int>(inst.tokens.size())) return false;
    }
  }
  return true;
}

using SpecLists = std::vector<std::vector<InterventionSpec>>;

SpecLists map_specs(const SpecLists& in, const std::function<InterventionSpec(const InterventionSpec&, std::size_t)>& f) {
  SpecLists out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (const auto& s : in[i]) out[i].push_back(f(s, i));
  }
  return out;
}

}  // namespace

LockManifest lock_branch(const LockRequest& req, std::span<const Weights> models, const SplitView& support,
                         const std::string& query_hash) {
  require(models.size() == req.seeds.models.size(), ErrorCode::kInvalidArgument,
          "one model seed per model is needed");
  const auto search = support_search(req.space, models, support, req.multiplicity_delta);
  const auto& best = search.selected;

  Selection sel;
  sel.key = best.candidate.key;
  sel.channels = best.candidate.channels;
  sel.rank = best.candidate.rank;
  sel.head_budget = best.candidate.head_budget;
  sel.heads_per_model = best.heads_per_model;
  sel.support_score = best.score;

  ManifestContent draft;
  draft.branch_id = req.branch_id;
  draft.family_id = req.space.family_id;
  draft.config_hash = req.config_hash;
  draft.support_hash = support.hash;
  draft.query_hash = query_hash;
  draft.selection = sel;
  draft.thresholds = req.thresholds;
  draft.seeds = req.seeds;
  draft.ledger = search.ledger;
  draft.notes = {{"kv_heads", "ALL"}, {"seeds", "locked before query"}};
  for (const auto& [k, v] : req.notes) draft.notes[k] = v;

  // Smallest rank within rank_delta of the full patch, on the mean over models.
  const auto& w0 = models.front();
  const auto probe = compile_candidate(w0, sel.key, sel.channels, std::nullopt, support);
  const auto eval = [&](std::optional<int> r) {
    std::vector<double> per_model;
    for (std::size_t i = 0; i < models.size(); ++i) {
      per_model.push_back(support_metric(models[i], sel, sel.heads_per_model[i], r, support));
    }
    return mean(per_model);
  };
  draft.rank_star = rank_sweep(eval, max_patch_rank(probe.compiled), req.rank_delta, SplitTag::kSupport).r_star;

  if (is_resid_site(sel.key.site)) {
    for (const auto& w : models) {
      const auto patches = compile_candidate(w, sel.key, sel.channels, sel.rank, support);
      const auto specs = patch_specs(w, patches.compiled, support.receivers, support, Condition::kCompiled);
      const Provenance prov{SplitTag::kSupport, Condition::kCompiled, support.hash};
      const auto means = head_means(w, support.receivers, specs, prov);
      draft.head_rankings.push_back(head_rank(w, support.receivers, specs, means, SplitTag::kSupport).order);
    }
  }

  LockManifest m(std::move(draft));
  m.freeze();
  return m;
}

ClassifyInput classify_input(const SeedEvidence& s) {
  ClassifyInput in;
  in.compiled_recovery = s.compiled_recovery;
  in.reverse_acc = s.table.row("compiled_KV<-centered").route_acc;
  in.centered_acc = s.table.row("centered").route_acc;
  for (const auto& c : s.controls) {
    if (c.applicable) in.control_recoveries.push_back({c.name, c.recovery});
  }
  in.widened_recovery = s.widened_recovery;
  return in;
}

EvidenceReport query_evaluate(LockManifest& manifest, std::span<const Weights> models, const SplitView& support,
                              const SplitView& query, const Vocab& vocab, const EvaluateOptions& opts) {
  manifest.require_locked("query evaluation");
  const auto& c = manifest.content();
  require(manifest.status() == ManifestStatus::kLocked, ErrorCode::kLockViolation,
          "branch " + c.branch_id + " was already evaluated on query data; start a new branch");
  require(support.tag == SplitTag::kSupport && query.tag == SplitTag::kQuery, ErrorCode::kLockViolation,
          "split views carry the wrong provenance");
  require(support.hash == c.support_hash, ErrorCode::kLockViolation, "support split differs from the locked one");
  require(query.hash == c.query_hash, ErrorCode::kLockViolation, "query split hash does not match the manifest");
  require(models.size() == c.seeds.models.size(), ErrorCode::kInvalidArgument, "model count differs from the manifest");
  const Selection& sel = *c.selection;
  require(is_resid_site(sel.key.site), ErrorCode::kInvalidArgument, "query battery needs a residual selection");

  EvidenceReport rep;
  rep.branch_id = c.branch_id;
  rep.family_id = c.family_id;
  rep.config_hash = c.config_hash;
  rep.manifest_hash = manifest.hash();
  rep.thresholds = c.thresholds;
  rep.seeds = c.seeds;

  const Rng control_root(c.seeds.control);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& w = models[i];
    const auto& cfg = w.config;
    Rng crng = control_root.child(i);
    SeedEvidence s;
    s.model_seed = c.seeds.models[i];
    s.donor_acc = evaluate_routing(w, query.donors).route_acc;
    s.receiver_acc = evaluate_routing(w, query.receivers).route_acc;
    const auto recovery = [&](double acc) { return safe_recovery(acc, s.receiver_acc, s.donor_acc); };

    const auto patches = compile_candidate(w, sel.key, sel.channels, sel.rank, support);
    s.table = battery_table2(w, patches.compiled, patches.centered, query.donors, query.receivers, query.hash);
    s.compiled_recovery = recovery(s.table.row("compiled").route_acc);

    const Provenance qprov{SplitTag::kQuery, Condition::kCompiled, query.hash};
    const auto bank = patch_bank(patches.compiled, query.receivers, qprov);
    const auto specs = bank_specs(bank, query.receivers, cfg);
    const auto run = [&](const std::string& name, const SpecLists& lists) {
      const double acc = evaluate_routing(w, query.receivers, lists).route_acc;
      s.controls.push_back({name, true, acc, recovery(acc)});
    };

    Rng perm_rng = crng.child(0);
    run("permute", bank_specs(permute_control(bank, perm_rng), query.receivers, cfg));
    for (int offset : {1, -1}) {
      const std::string name = offset > 0 ? "shift+1" : "shift-1";
      if (!shift_applicable(query.receivers, sel.key, offset)) {
        s.controls.push_back({name, false, std::nan(""), std::nan("")});
        continue;
      }
      run(name, map_specs(specs, [&](const InterventionSpec& sp, std::size_t j) {
            return token_shift_control(sp, offset, query.receivers[j].slots, cfg);
          }));
    }
    InterfaceKey wrong_layer = sel.key;
    wrong_layer.layer = (sel.key.layer + 1) % cfg.n_layers;
    InterfaceKey wrong_site = sel.key;
    wrong_site.site = sel.key.site == Site::kResidAttn ? Site::kResidBlock : Site::kResidAttn;
    for (const auto& [name, key] : {std::pair{"wrong_layer", wrong_layer}, std::pair{"wrong_site", wrong_site}}) {
      run(name, map_specs(specs, [&](const InterventionSpec& sp, std::size_t j) {
            return wrong_interface_control(sp, key, query.receivers[j].slots, cfg);
          }));
    }
    Rng rm_rng = crng.child(1);
    run("random_matched", bank_specs(random_matched_states(bank, rm_rng), query.receivers, cfg));
    Rng pm_rng = crng.child(2);
    run("pseudo_mix", bank_specs(pseudo_mix(bank, pm_rng), query.receivers, cfg));

    const Interface wide = downstream_attention(sel.key, Channels::kQKV, cfg);
    if (!wide.keys.empty()) {
      const auto wbank = capture(w, support.donors, wide, {SplitTag::kSupport, Condition::kDonor, support.hash});
      const auto wpatch = compile_patch(wbank, PatchClass::kCompiled);
      const auto wspecs = bank_specs(patch_bank(wpatch, query.receivers, qprov), query.receivers, cfg);
      s.widened_acc = evaluate_routing(w, query.receivers, wspecs).route_acc;
      s.widened_recovery = recovery(*s.widened_acc);
    }

    if (i < c.head_rankings.size()) {
      const auto sspecs = patch_specs(w, patches.compiled, support.receivers, support, Condition::kCompiled);
      const auto means =
          head_means(w, support.receivers, sspecs, {SplitTag::kSupport, Condition::kCompiled, support.hash});
      HeadRanking ranking;
      ranking.order = c.head_rankings[i];
      ranking.damage.assign(ranking.order.size(), 0.0);
      ranking.split_hash = support.hash;
      const int total = cfg.n_layers * cfg.n_heads;
      const int k = std::max(1, static_cast<int>(std::lround(opts.head_fraction * total)));
      Rng head_rng = crng.child(3);
      s.heads = topk_ablate_vs_random(w, query.receivers, specs, means, ranking, k, opts.n_random_headsets, head_rng);
    }

    if (opts.baselines) {
      std::vector<TunableSlot> per_route;
      for (Route r : family_routes(parse_family(c.family_id))) {
        per_route.push_back(invert_control(w, support.receivers, r, opts.inversion_budget, vocab));
      }
      s.inversion_acc = tuned_route_acc(w, query.receivers, per_route);
      Rng lr_rng = crng.child(4);
      s.lowrank_acc = lowrank_baseline(w, sel.key.layer, opts.lowrank_rank, 1.0, support.receivers, query.receivers,
                                       opts.lowrank_budget, lr_rng)
                          .query_acc;
    }

    s.verdict = classify(classify_input(s), c.thresholds);
    if (s.verdict.cls == EvidenceClass::kSingleInterface) ++rep.seeds_single;
    rep.per_seed.push_back(std::move(s));
  }

  // Report rows.
  std::vector<Table2> tables;
  for (const auto& s : rep.per_seed) tables.push_back(s.table);
  rep.rows = table2_rows(tables);
  const auto collect = [&](const std::function<double(const SeedEvidence&)>& f) {
    std::vector<double> v;
    for (const auto& s : rep.per_seed) v.push_back(f(s));
    return v;
  };
  rep.rows.push_back(make_row("donor", "query_route_acc", collect([](const auto& s) { return s.donor_acc; })));
  rep.rows.push_back(make_row("receiver", "query_route_acc", collect([](const auto& s) { return s.receiver_acc; })));
  rep.rows.push_back(make_row("compiled", "recovery_fraction",
                              collect([](const auto& s) { return s.compiled_recovery; })));

  ClassifyInput mean_in;
  mean_in.compiled_recovery = rep.rows.back().mean;
  mean_in.reverse_acc = mean(collect([](const auto& s) { return s.table.row("compiled_KV<-centered").route_acc; }));
  mean_in.centered_acc = mean(collect([](const auto& s) { return s.table.row("centered").route_acc; }));

  const auto& first = rep.per_seed.front();
  for (std::size_t k = 0; k < first.controls.size(); ++k) {
    const auto& name = first.controls[k].name;
    if (!first.controls[k].applicable) continue;
    const auto rec = collect([&](const auto& s) { return s.controls[k].recovery; });
    rep.rows.push_back(make_row("control:" + name, "recovery_fraction", rec, "compiled"));
    mean_in.control_recoveries.push_back({name, rep.rows.back().mean});
  }
  if (first.widened_recovery) {
    rep.rows.push_back(make_row("widened_QKV", "recovery_fraction",
                                collect([](const auto& s) { return *s.widened_recovery; })));
    mean_in.widened_recovery = rep.rows.back().mean;
  }
  if (!first.heads.selected.empty()) {
    const std::string top = "heads_top" + std::to_string(first.heads.selected.size());
    const auto sel_d = collect([](const auto& s) { return s.heads.selected_delta; });
    const auto rnd_d = collect([](const auto& s) { return mean(s.heads.random_deltas); });
    rep.rows.push_back(make_row(top, "ablation_delta", sel_d, {}, reference::kSelectedHeadDelta));
    rep.rows.push_back(make_row("heads_random_mean", "ablation_delta", rnd_d, top, reference::kRandomHeadDeltaMean));
    std::vector<double> margin;
    bool ties = false;
    for (std::size_t i = 0; i < sel_d.size(); ++i) {
      margin.push_back(rnd_d[i] - sel_d[i]);
      ties = ties || margin.back() == 0.0;
    }
    if (!ties) rep.head_sign_p = sign_flip_pvalue(margin);
  }
  if (first.inversion_acc) {
    rep.rows.push_back(make_row("baseline:inversion", "route_acc", collect([](const auto& s) { return *s.inversion_acc; })));
    rep.rows.push_back(make_row("baseline:lowrank", "route_acc", collect([](const auto& s) { return *s.lowrank_acc; }),
                                {}, reference::kTriopLowRank));
  }

  Rng agg_rng = control_root.child(1000);
  for (const auto& r : rep.rows) {
    const bool finite = std::all_of(r.per_seed.begin(), r.per_seed.end(), [](double v) { return std::isfinite(v); });
    if (finite && (r.metric == "recovery_fraction" || r.metric == "ablation_delta")) {
      rep.aggregates[r.condition] = aggregate(r.per_seed, agg_rng);
    }
  }

  rep.verdict = classify(mean_in, c.thresholds);
  manifest.consume();
  return rep;
}

namespace {

json number(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

json verdict_json(const Verdict& v) {
  return {{"class", std::string(to_string(v.cls))},
          {"sufficiency", v.sufficiency},
          {"necessity", v.necessity},
          {"controls", v.controls},
          {"widened", v.widened},
          {"failing_controls", v.failing_controls}};
}

}  // namespace

std::string report_json(const EvidenceReport& r) {
  json doc;
  doc["branch_id"] = r.branch_id;
  doc["family_id"] = r.family_id;
  doc["config_hash"] = r.config_hash;
  doc["manifest_hash"] = r.manifest_hash;
  doc["version"] = PATCHLAB_VERSION;
  doc["seeds"] = {{"models", r.seeds.models}, {"data", r.seeds.data}, {"control", r.seeds.control}};
  doc["thresholds"] = {{"theta_suff", r.thresholds.theta_suff},
                       {"eps_nec", r.thresholds.eps_nec},
                       {"control_margin", r.thresholds.control_margin}};
  json rows = json::array();
  for (const auto& row : r.rows) {
    json per_seed = json::array();
    for (double v : row.per_seed) per_seed.push_back(number(v));
    rows.push_back({{"condition", row.condition},
                    {"metric", row.metric},
                    {"mean", number(row.mean)},
                    {"std", number(row.std)},
                    {"n_seeds", row.n_seeds},
                    {"control_of", row.control_of},
                    {"reference", optional_number(row.reference)},
                    {"per_seed", per_seed}});
  }
  doc["rows"] = rows;
  json seeds = json::array();
  for (const auto& s : r.per_seed) {
    json controls = json::array();
    for (const auto& c : s.controls) {
      controls.push_back(
          {{"name", c.name}, {"applicable", c.applicable}, {"acc", number(c.acc)}, {"recovery", number(c.recovery)}});
    }
    const auto in = classify_input(s);
    json ci;
    ci["compiled_recovery"] = number(*in.compiled_recovery);
    ci["reverse_acc"] = number(*in.reverse_acc);
    ci["centered_acc"] = number(*in.centered_acc);
    ci["widened_recovery"] = optional_number(in.widened_recovery);
    json cr = json::object();
    for (const auto& [name, v] : in.control_recoveries) cr[name] = number(v);
    ci["control_recoveries"] = cr;
    json heads = json::array();
    for (const auto& h : s.heads.selected) heads.push_back({h.layer, h.head});
    json random = json::array();
    for (double d : s.heads.random_deltas) random.push_back(number(d));
    seeds.push_back({{"model_seed", s.model_seed},
                     {"donor_acc", number(s.donor_acc)},
                     {"receiver_acc", number(s.receiver_acc)},
                     {"necessity_gap", number(s.table.necessity_gap)},
                     {"sufficiency_gap", number(s.table.sufficiency_gap)},
                     {"controls", controls},
                     {"widened_acc", optional_number(s.widened_acc)},
                     {"heads", {{"selected", heads},
                                {"intact", number(s.heads.intact)},
                                {"selected_delta", number(s.heads.selected_delta)},
                                {"random_deltas", random}}},
                     {"inversion_acc", optional_number(s.inversion_acc)},
                     {"lowrank_acc", optional_number(s.lowrank_acc)},
                     {"classify_input", ci},
                     {"verdict", verdict_json(s.verdict)}});
  }
  doc["per_seed"] = seeds;
  json agg = json::object();
  for (const auto& [name, a] : r.aggregates) {
    agg[name] = {{"mean", number(a.mean)}, {"std", number(a.std)}, {"ci", {number(a.ci.lo), number(a.ci.hi)}},
                 {"n", a.n}};
  }
  doc["aggregates"] = agg;
  doc["head_sign_flip_p"] = optional_number(r.head_sign_p);
  doc["classification"] = verdict_json(r.verdict);
  doc["seeds_single_interface"] = r.seeds_single;
  return doc.dump(2) + "\n";
}

std::string report_csv(const EvidenceReport& r) {
  std::vector<std::string> footer;
  footer.push_back("classification=" + std::string(to_string(r.verdict.cls)));
  footer.push_back("seeds_single_interface=" + std::to_string(r.seeds_single) + "/" +
                   std::to_string(r.per_seed.size()));
  for (const auto& c : r.per_seed.front().controls) {
    if (!c.applicable) footer.push_back("inapplicable control: " + c.name);
  }
  if (r.head_sign_p) footer.push_back("head_sign_flip_p=" + format_value(*r.head_sign_p, 6));
  return patchlab::report_csv(r.rows, meta_line(r.config_hash, r.manifest_hash, r.seeds.models), footer);
}

LedgerSummary ledger_report(const LockManifest& manifest) {
  require(manifest.status() != ManifestStatus::kOpen, ErrorCode::kState,
          "the search ledger is reported only after the manifest is locked");
  const auto& c = manifest.content();
  LedgerSummary out;
  out.axis_counts = c.ledger.axis_counts;
  out.n_candidates = c.ledger.n_candidates;
  out.total_evaluations = c.ledger.total_evaluations;
  out.delta = c.ledger.multiplicity_delta;
  out.selected_score = c.selection ? c.selection->support_score : 0.0;
  for (const auto& e : c.ledger.candidates) {
    if (e.score >= out.selected_score - out.delta) ++out.multiplicity;
  }
  return out;
}

}  // namespace patchlab
