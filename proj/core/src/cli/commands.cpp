#include "patchlab/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "patchlab/interventions/copyn.hpp"
#include "patchlab/metrics/reference.hpp"
#include "patchlab/model/checkpoint.hpp"
#include "patchlab/numerics/hash.hpp"

namespace patchlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLockViolation:
    case ErrorCode::kState:
      return 3;
    case ErrorCode::kConfig:
    case ErrorCode::kIo:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kAddress:
    case ErrorCode::kCapacity:
    case ErrorCode::kConflict:
      return 2;
    case ErrorCode::kTrainingFailure:
      return 4;
    case ErrorCode::kNumericDomain:
    case ErrorCode::kUndefinedDenominator:
      return 5;
    default:
      return 1;
  }
}

namespace {

void ensure_parent(const std::string& path) {
  std::error_code ec;
  fs::create_directories(fs::path(path).parent_path(), ec);
}

void write_file(const std::string& path, const std::string& content) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << content;
  require(out.good(), ErrorCode::kIo, "failed writing " + path);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

bool is_routing(Family f) { return f != Family::kCopyN; }

BaseTrainConfig train_config(const RunConfig& cfg, Family family) {
  BaseTrainConfig tc = cfg.budgets.train;
  if (!is_routing(family)) tc.steps = cfg.budgets.copy_steps;
  return tc;
}

std::string train_digest(const RunConfig& cfg, Family family) {
  const auto tc = train_config(cfg, family);
  const auto& m = cfg.model;
  json j = {{"model", {m.n_layers, m.n_heads, m.d_model, m.d_head, m.d_mlp, m.vocab_size, m.max_positions}},
            {"family", std::string(to_string(family))},
            {"vocab", {cfg.task.modulus, cfg.task.payload_size}},
            {"train", {tc.steps, tc.batch_size, tc.lr, tc.weight_decay, tc.grad_clip, tc.checkpoint_every, tc.log_every}}};
  if (!is_routing(family)) j["copy_lengths"] = cfg.task.copy_lengths;
  return sha256_hex(j.dump()).substr(0, 12);
}

struct RoutingData {
  SplitView support;
  SplitView query;
};

RoutingData routing_data(const RunConfig& cfg) {
  require(is_routing(cfg.task.family), ErrorCode::kConfig, "this command needs a routing family (ADDSUB or TRIOP)");
  const Vocab vocab = cfg.vocab();
  Rng rng(cfg.seeds.data);
  const auto instances = gen_routing(cfg.task.family, cfg.task.n_pairs, vocab, rng);
  const auto donors = with_role(instances, Role::kDonor);
  require(cfg.split.n_support < static_cast<int>(donors.size()), ErrorCode::kConfig,
          "split.n_support leaves no query pairs");
  const auto plan = make_split(donors, cfg.split.n_support, rng);
  return {split_view(instances, plan, SplitTag::kSupport), split_view(instances, plan, SplitTag::kQuery)};
}

struct Targets {
  json values;
  bool met = true;
};

Targets check_targets(const RunConfig& cfg, Family family, const Weights& w, std::uint64_t seed) {
  const Vocab vocab = cfg.vocab();
  Rng rng = Rng(seed).child(77);
  Targets t;
  if (is_routing(family)) {
    const auto inst = gen_routing(family, 300, vocab, rng);
    const double donor = evaluate_routing(w, with_role(inst, Role::kDonor)).route_acc;
    const double receiver = evaluate_routing(w, with_role(inst, Role::kReceiver)).route_acc;
    const double chance = 1.0 / static_cast<double>(family_routes(family).size());
    t.values = {{"donor_acc", donor}, {"receiver_acc", receiver}, {"chance", chance}};
    t.met = donor >= 0.95 && std::abs(receiver - chance) <= 0.05;
  } else {
    json per_n = json::object();
    for (int n : cfg.task.copy_lengths) {
      const auto inst = gen_copyN(n, 100, vocab, rng, cfg.model.max_positions);
      std::vector<Rollout> targets;
      for (const auto& i : inst) targets.push_back(i.target);
      const auto r = rollouts(w, inst);
      per_n[std::to_string(n)] = {{"gen_tok_acc_full", gen_tok_acc_full(r, targets)},
                                  {"gen_exact_full", gen_exact_full(r, targets)}};
    }
    t.values = per_n;
  }
  return t;
}

std::vector<TrainedModel> train_family(const RunConfig& cfg, Family family, std::ostream& log, bool enforce) {
  const Vocab vocab = cfg.vocab();
  vocab.validate(cfg.model.vocab_size);
  const auto hash = config_hash(cfg);
  std::vector<TrainedModel> out;
  std::vector<std::uint64_t> missed;
  for (auto seed : cfg.seeds.models) {
    TrainedModel tm;
    tm.seed = seed;
    tm.checkpoint = checkpoint_path(cfg, family, seed);
    const std::string log_path = tm.checkpoint.substr(0, tm.checkpoint.size() - std::string(".ckpt.json").size()) +
                                 ".log.json";
    if (fs::exists(tm.checkpoint)) {
      tm.weights = load_checkpoint(tm.checkpoint);
      require(tm.weights.config == cfg.model, ErrorCode::kConfig,
              "checkpoint " + tm.checkpoint + " was trained with another model config");
      log << "reuse " << tm.checkpoint << "\n";
    } else {
      Rng rng(seed);
      const auto stream = is_routing(family) ? routing_stream(family, vocab)
                                             : copy_stream(cfg.task.copy_lengths, vocab, cfg.model.max_positions);
      auto res = train_base(cfg.model, stream, train_config(cfg, family), rng, vocab.ctrl_neutral());
      tm.weights = std::move(res.weights);
      ensure_parent(tm.checkpoint);
      save_checkpoint(tm.weights, tm.checkpoint);
      const auto targets = check_targets(cfg, family, tm.weights, seed);
      json curve = json::array();
      for (const auto& [step, loss] : res.log.loss_curve) curve.push_back({step, loss});
      json ckpts = json::array();
      for (const auto& [step, digest] : res.log.checkpoints) ckpts.push_back({step, digest});
      json doc = {{"config_hash", hash},
                  {"version", PATCHLAB_VERSION},
                  {"family", std::string(to_string(family))},
                  {"seed", seed},
                  {"seeds", cfg.seeds.models},
                  {"checkpoint", fs::path(tm.checkpoint).filename().string()},
                  {"weights_digest", weights_digest(tm.weights)},
                  {"initial_loss", res.log.initial_loss},
                  {"final_loss", res.log.final_loss},
                  {"loss_curve", curve},
                  {"checkpoints", ckpts},
                  {"examples_seen", res.log.examples_seen},
                  {"neutral_audit_hits", res.log.neutral_audit_hits},
                  {"final", targets.values},
                  {"targets_met", targets.met}};
      write_file(log_path, doc.dump(2) + "\n");
      log << "trained " << tm.checkpoint << " loss " << format_value(res.log.initial_loss, 4) << " -> "
          << format_value(res.log.final_loss, 4) << "\n";
    }
    if (enforce && is_routing(family) && !check_targets(cfg, family, tm.weights, seed).met) missed.push_back(seed);
    out.push_back(std::move(tm));
  }
  if (!missed.empty()) {
    std::string list;
    for (auto s : missed) list += (list.empty() ? "" : ", ") + std::to_string(s);
    fail(ErrorCode::kTrainingFailure, "models for seed(s) " + list + " missed the donor/receiver accuracy targets");
  }
  return out;
}

std::vector<Weights> weights_of(const std::vector<TrainedModel>& models) {
  std::vector<Weights> out;
  for (const auto& m : models) out.push_back(m.weights);
  return out;
}

std::string manifest_file(const RunConfig& cfg, const std::string& branch) {
  return cfg.output_dir + "/" + branch + "/manifest.json";
}

BranchOutcome evaluate_and_report(const RunConfig& cfg, LockManifest& m, const std::vector<Weights>& models,
                                  const RoutingData& data, std::ostream& log) {
  // Status is outside the hash, so a report on disk is the record of consumption.
  const auto existing = cfg.output_dir + "/" + m.content().branch_id + "/" + m.hash() + "/report.json";
  require(!fs::exists(existing), ErrorCode::kLockViolation,
          "manifest " + m.hash() + " already has a query report; start a new branch");
  const auto report = query_evaluate(m, models, data.support, data.query, cfg.vocab(), cfg.budgets.evaluate);
  BranchOutcome out;
  out.branch_id = m.content().branch_id;
  out.manifest_path = manifest_file(cfg, out.branch_id);
  out.report_dir = cfg.output_dir + "/" + out.branch_id + "/" + m.hash();
  write_file(out.report_dir + "/report.json", report_json(report));
  write_file(out.report_dir + "/report.csv", report_csv(report));
  save_manifest(m, out.manifest_path);
  out.classification = std::string(to_string(report.verdict.cls));
  const auto ledger = ledger_report(m);
  log << "branch " << out.branch_id << " manifest " << m.hash() << "\n"
      << "classification " << out.classification << " (single-interface seeds " << report.seeds_single << "/"
      << report.per_seed.size() << ")\n"
      << "search ledger: " << ledger.n_candidates << " candidates, " << ledger.total_evaluations
      << " evaluations, multiplicity " << ledger.multiplicity << " within " << format_value(ledger.delta, 3) << "\n"
      << "report " << out.report_dir << "/report.csv\n";
  return out;
}

LockManifest lock_new(const RunConfig& cfg, const std::string& branch, const std::vector<Weights>& models,
                      const RoutingData& data, const std::string& parent) {
  LockRequest req;
  req.branch_id = branch;
  req.config_hash = config_hash(cfg);
  req.space = cfg.search;
  req.space.family_id = std::string(to_string(cfg.task.family));
  req.thresholds = cfg.thresholds.locked;
  req.seeds = cfg.seeds;
  req.multiplicity_delta = cfg.thresholds.multiplicity_delta;
  req.rank_delta = cfg.thresholds.rank_delta;
  if (!parent.empty()) req.notes["parent_branch"] = parent;
  auto m = lock_branch(req, models, data.support, data.query.hash);
  ensure_parent(manifest_file(cfg, branch));
  save_manifest(m, manifest_file(cfg, branch));
  return m;
}

void require_same_config(const LockManifest& m, const RunConfig& cfg) {
  require(m.content().config_hash == config_hash(cfg), ErrorCode::kLockViolation,
          "branch " + m.content().branch_id +
              " was locked under another config; changing the run after lock needs --new-branch");
}

}  // namespace

std::string checkpoint_path(const RunConfig& cfg, Family family, std::uint64_t seed) {
  return cfg.models_dir() + "/" + lower(to_string(family)) + "-s" + std::to_string(seed) + "-" +
         train_digest(cfg, family) + ".ckpt.json";
}

std::vector<TrainedModel> cmd_train(const RunConfig& cfg, std::ostream& log) {
  return train_family(cfg, cfg.task.family, log, true);
}

std::vector<TrainedModel> load_models(const RunConfig& cfg, Family family) {
  std::vector<TrainedModel> out;
  for (auto seed : cfg.seeds.models) {
    TrainedModel tm;
    tm.seed = seed;
    tm.checkpoint = checkpoint_path(cfg, family, seed);
    require(fs::exists(tm.checkpoint), ErrorCode::kIo,
            "checkpoint " + tm.checkpoint + " does not exist; run `patchlab train` first");
    tm.weights = load_checkpoint(tm.checkpoint);
    require(tm.weights.config == cfg.model, ErrorCode::kConfig,
            "checkpoint " + tm.checkpoint + " was trained with another model config");
    out.push_back(std::move(tm));
  }
  return out;
}

BranchOutcome cmd_branch(const RunConfig& cfg, bool new_branch, std::ostream& log) {
  const auto models = weights_of(load_models(cfg, cfg.task.family));
  const auto data = routing_data(cfg);
  std::string branch = cfg.branch_id;
  std::string parent;

  if (fs::exists(manifest_file(cfg, branch))) {
    auto m = load_manifest(manifest_file(cfg, branch));
    if (m.status() == ManifestStatus::kConsumed) {
      require(new_branch, ErrorCode::kLockViolation,
              "branch " + branch + " was already evaluated on query data (manifest " + m.hash() +
                  "); re-running needs --new-branch");
      parent = branch;
      for (int k = 2;; ++k) {
        branch = cfg.branch_id + "-b" + std::to_string(k);
        if (!fs::exists(manifest_file(cfg, branch))) break;
        auto next = load_manifest(manifest_file(cfg, branch));
        if (next.status() == ManifestStatus::kConsumed) continue;
        if (next.status() == ManifestStatus::kLocked) {
          require_same_config(next, cfg);
          log << "resuming locked branch " << branch << "\n";
          return evaluate_and_report(cfg, next, models, data, log);
        }
        break;
      }
      log << "opening protocol branch " << branch << " (parent " << parent << ")\n";
    } else if (m.status() == ManifestStatus::kLocked) {
      require_same_config(m, cfg);
      log << "resuming locked branch " << branch << "\n";
      return evaluate_and_report(cfg, m, models, data, log);
    }
  }
  auto m = lock_new(cfg, branch, models, data, parent);
  log << "locked " << branch << " at " << describe(m.content().selection->key) << " (support score "
      << format_value(m.content().selection->support_score, 4) << ")\n";
  return evaluate_and_report(cfg, m, models, data, log);
}

BranchOutcome cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto path = manifest_file(cfg, cfg.branch_id);
  require(fs::exists(path), ErrorCode::kIo, "no manifest at " + path);
  auto m = load_manifest(path);
  m.require_locked("query evaluation");
  require_same_config(m, cfg);
  const auto models = weights_of(load_models(cfg, cfg.task.family));
  return evaluate_and_report(cfg, m, models, routing_data(cfg), log);
}

std::string cmd_copyn(const RunConfig& cfg, std::ostream& log) {
  require(!cfg.task.copy_lengths.empty(), ErrorCode::kConfig, "task.copy_lengths is empty");
  for (int n : cfg.task.copy_lengths) {
    require(n + 2 <= cfg.model.max_positions - n, ErrorCode::kConfig,
            "copy length " + std::to_string(n) + " does not fit max_positions");
  }
  const auto models = train_family(cfg, Family::kCopyN, log, false);
  const Vocab vocab = cfg.vocab();
  const auto hash = config_hash(cfg);

  // rows[n][seed]
  std::vector<std::vector<CopyNConditions>> rows;
  for (int n : cfg.task.copy_lengths) {
    Rng rng = Rng(cfg.seeds.data).child(static_cast<std::uint64_t>(n));
    const auto split = copyn_split(n, cfg.task.copy_count, cfg.task.copy_support, vocab, rng, cfg.model.max_positions);
    std::vector<CopyNConditions> per_seed;
    for (const auto& m : models) per_seed.push_back(copyn_conditions(m.weights, split));
    rows.push_back(std::move(per_seed));
  }

  const auto avg = [](const std::vector<CopyNConditions>& v, double CopyNConditions::*f) {
    double s = 0.0;
    for (const auto& c : v) s += c.*f;
    return s / static_cast<double>(v.size());
  };
  std::string csv = meta_line(hash, "", cfg.seeds.models) + "\n";
  csv += "N,compiled,c<-KV,c<-QKV,centered,clean,TOK1,TOKPOS,swap,replace_minus_swap,swap_gap_positive_seeds,"
         "qkv_ge_kv,ref_compiled,ref_c<-KV,ref_c<-QKV\n";
  json jrows = json::array();
  bool all_qkv = true;
  double min_tokpos_gap = 1e9;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i];
    const int n = cfg.task.copy_lengths[i];
    int positive = 0;
    json seeds = json::array();
    for (std::size_t s = 0; s < v.size(); ++s) {
      positive += v[s].replace_minus_swap() > 0.0;
      seeds.push_back({{"seed", models[s].seed},
                       {"clean", v[s].clean},
                       {"clean_exact", v[s].clean_exact},
                       {"corrupt", v[s].corrupt},
                       {"compiled", v[s].compiled},
                       {"centered", v[s].centered},
                       {"c<-KV", v[s].centered_kv},
                       {"c<-QKV", v[s].centered_qkv},
                       {"TOK1", v[s].tok1},
                       {"TOKPOS", v[s].tokpos},
                       {"swap", v[s].swap},
                       {"swap_dropped", v[s].swap_dropped}});
    }
    const double kv = avg(v, &CopyNConditions::centered_kv);
    const double qkv = avg(v, &CopyNConditions::centered_qkv);
    const bool ordered = qkv >= kv;
    all_qkv = all_qkv && ordered;
    min_tokpos_gap = std::min(min_tokpos_gap, avg(v, &CopyNConditions::tokpos) - avg(v, &CopyNConditions::tok1));
    const auto ref = reference::copy_row(n);
    const auto cell = [&](double CopyNConditions::*f) { return format_value(avg(v, f)); };
    const auto r = [&](double x) { return ref ? format_value(x, 3) : std::string(); };
    csv += std::to_string(n) + "," + cell(&CopyNConditions::compiled) + "," + format_value(kv) + "," +
           format_value(qkv) + "," + cell(&CopyNConditions::centered) + "," + cell(&CopyNConditions::clean) + "," +
           cell(&CopyNConditions::tok1) + "," + cell(&CopyNConditions::tokpos) + "," + cell(&CopyNConditions::swap) +
           "," + format_value(avg(v, &CopyNConditions::tokpos) - avg(v, &CopyNConditions::swap)) + "," +
           std::to_string(positive) + "/" + std::to_string(v.size()) + "," + (ordered ? "yes" : "no") + "," +
           r(ref ? ref->compiled : 0) + "," + r(ref ? ref->centered_kv : 0) + "," + r(ref ? ref->centered_qkv : 0) +
           "\n";
    jrows.push_back({{"N", n},
                     {"per_seed", seeds},
                     {"qkv_ge_kv", ordered},
                     {"swap_gap_positive_seeds", positive}});
  }
  csv += "# qkv_ge_kv_all=" + std::string(all_qkv ? "yes" : "no") + "\n";
  csv += "# min_tokpos_minus_tok1=" + format_value(min_tokpos_gap) + "\n";

  const std::string dir = cfg.output_dir + "/copyn/" + hash;
  write_file(dir + "/copyn.csv", csv);
  json doc = {{"config_hash", hash},
              {"version", PATCHLAB_VERSION},
              {"seeds", cfg.seeds.models},
              {"rows", jrows},
              {"qkv_ge_kv_all", all_qkv},
              {"min_tokpos_minus_tok1", min_tokpos_gap}};
  write_file(dir + "/copyn.json", doc.dump(2) + "\n");
  log << "copyn report " << dir << "/copyn.csv\n";
  return dir;
}

std::string cmd_relocate(const RunConfig& cfg, std::ostream& log) {
  const auto& r = cfg.budgets.relocation;
  require(!r.slots.empty() && !r.supports.empty() && !r.steps.empty(), ErrorCode::kConfig, "relocation grid is empty");
  auto models = train_family(cfg, cfg.task.family, log, false);
  const auto data = routing_data(cfg);
  const auto& tm = models.front();
  const auto& w = tm.weights;
  const auto hash = config_hash(cfg);

  const InterfaceKey key{0, Site::kResidBlock, std::nullopt, {"ctrl"}};
  const auto patches = compile_candidate(w, key, Channels::kResid, std::nullopt, data.support);
  const auto specs = patch_specs(w, patches.compiled, data.query.receivers, data.query, Condition::kCompiled);
  const double compiled = evaluate_routing(w, data.query.receivers, specs).route_acc;

  Rng rng = Rng(cfg.seeds.control).child(500);
  auto grid = relocation_grid(w, data.support.receivers, data.query.receivers, r, compiled, rng);
  grid.compiled_label = "compiled " + describe(key);
  const auto finding = relocation_finding(grid, compiled - cfg.thresholds.match_tolerance);

  const std::vector<std::uint64_t> seeds = {tm.seed};
  const auto meta = meta_line(hash, "", seeds);
  const std::string dir = cfg.output_dir + "/relocation/" + hash;
  write_file(dir + "/relocation.csv", relocation_csv(grid, meta));
  write_file(dir + "/cost_to_match.csv", cost_to_match_csv(finding, meta));
  json cells = json::array();
  for (const auto& c : grid.cells) {
    cells.push_back({{"slot", c.slot},
                     {"support", c.support},
                     {"steps", c.steps},
                     {"cost", c.cost},
                     {"acc", c.acc},
                     {"support_acc", c.support_acc}});
  }
  json doc = {{"config_hash", hash},
              {"version", PATCHLAB_VERSION},
              {"seeds", seeds},
              {"compiled_acc", compiled},
              {"threshold", finding.threshold},
              {"costs", finding.costs},
              {"barrier_slots", finding.barrier_slots},
              {"barrier", finding.barrier},
              {"finding", finding.statement},
              {"cells", cells}};
  write_file(dir + "/relocation.json", doc.dump(2) + "\n");
  log << finding.statement << "\nrelocation report " << dir << "/relocation.csv\n";
  return dir;
}

int run(int argc, char** argv) {
  CLI::App app{"patchlab: support/query-locked activation patching on small transformers"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  bool new_branch = false;

  const auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run config")->required();
    sub->add_option("--seed-override", seed_override, "replace seeds.data (changes the manifest hash)");
    return sub;
  };
  auto* train = add("train", "train base models for every model seed");
  auto* branch = add("branch", "search, lock and evaluate one protocol branch");
  branch->add_flag("--new-branch", new_branch, "open a new branch when the configured one is consumed");
  auto* evaluate = add("evaluate", "query-evaluate an existing locked manifest");
  auto* copyn = add("copyn", "copyN generation scaling report");
  auto* relocate = add("relocate", "relocation grid and cost-to-match table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto cfg = load_config(config_path);
    if (seed_override) cfg.seeds.data = *seed_override;
    if (train->parsed()) {
      for (const auto& m : cmd_train(cfg, std::cout)) std::cout << m.checkpoint << "\n";
    } else if (branch->parsed()) {
      cmd_branch(cfg, new_branch, std::cout);
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, std::cout);
    } else if (copyn->parsed()) {
      cmd_copyn(cfg, std::cout);
    } else if (relocate->parsed()) {
      cmd_relocate(cfg, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "patchlab: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "patchlab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace patchlab::cli
