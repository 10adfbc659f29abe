#include "patchlab/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "patchlab/error.hpp"
#include "patchlab/numerics/hash.hpp"

namespace patchlab::cli {

using nlohmann::json;

std::string RunConfig::models_dir() const {
  return checkpoint_dir.empty() ? output_dir + "/models" : checkpoint_dir;
}

RunConfig default_config() {
  RunConfig c;
  c.search.layers = {0, 1};
  c.search.sites = {Site::kResidBlock, Site::kResidAttn, Site::kResidMlp};
  c.search.slots = {"ctrl"};
  c.search.channel_sets = {Channels::kResid};
  c.seeds.models = {0, 1, 2, 3, 4};
  c.seeds.data = 100;
  c.seeds.control = 7;
  return c;
}

namespace {

int line_at(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

// Line of the last key in `path`, found by walking the keys in order.
int line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& key : path) {
    const std::string quoted = "\"" + key + "\"";
    std::size_t hit = text.find(quoted, pos);
    while (hit != std::string::npos) {
      const auto colon = text.find_first_not_of(" \t\r\n", hit + quoted.size());
      if (colon != std::string::npos && text[colon] == ':') break;
      hit = text.find(quoted, hit + 1);
    }
    if (hit == std::string::npos) return line_at(text, pos);
    pos = hit;
  }
  return line_at(text, pos);
}

class Section {
 public:
  Section(const json& j, std::vector<std::string> path, const std::string& text, const std::string& origin)
      : j_(j), path_(std::move(path)), text_(text), origin_(origin) {
    if (!j_.is_object()) error({}, "expected an object");
  }

  [[noreturn]] void error(const std::string& key, const std::string& message) const {
    auto p = path_;
    if (!key.empty()) p.push_back(key);
    std::string dotted;
    for (const auto& k : p) dotted += (dotted.empty() ? "" : ".") + k;
    fail(ErrorCode::kConfig, origin_ + ":" + std::to_string(line_of(text_, p)) + ": " +
                                 (dotted.empty() ? "" : "'" + dotted + "' ") + message);
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      error(key, "has the wrong type");
    }
  }

  void read_int(const std::string& key, int& out, int lo, int hi = 1 << 30) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) error(key, "must be an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) error(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out = static_cast<int>(x);
  }

  void read_double(const std::string& key, double& out, double lo, double hi) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) error(key, "must be a number");
    out = v.get<double>();
    if (!(out >= lo && out <= hi)) error(key, "is out of range");
  }

  void read_ints(const std::string& key, std::vector<int>& out, int lo) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array()) error(key, "must be an array of integers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number_integer() || x.get<long long>() < lo) error(key, "holds an invalid entry");
      out.push_back(x.get<int>());
    }
  }

  template <typename Parse>
  auto read_enums(const std::string& key, Parse parse) {
    std::vector<decltype(parse(std::string_view{}))> out;
    const auto& v = j_.at(key);
    if (!v.is_array()) error(key, "must be an array of names");
    for (const auto& x : v) {
      if (!x.is_string()) error(key, "holds a non-string entry");
      try {
        out.push_back(parse(x.get<std::string>()));
      } catch (const Error& e) {
        error(key, e.what());
      }
    }
    return out;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    auto p = path_;
    p.push_back(key);
    return Section(j_.at(key), p, text_, origin_);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) error(k, "is not a recognised key");
    }
  }

 private:
  const json& j_;
  std::vector<std::string> path_;
  const std::string& text_;
  const std::string& origin_;
  std::set<std::string> seen_;
};

void read_model(Section s, ModelConfig& m) {
  s.read_int("n_layers", m.n_layers, 1, 64);
  s.read_int("n_heads", m.n_heads, 1, 64);
  s.read_int("d_model", m.d_model, 1);
  s.read_int("d_head", m.d_head, 1);
  s.read_int("d_mlp", m.d_mlp, 1);
  s.read_int("vocab_size", m.vocab_size, 2);
  s.read_int("max_positions", m.max_positions, 2);
  s.finish();
  if (m.d_model != m.n_heads * m.d_head) s.error("d_model", "must equal n_heads * d_head");
}

void read_task(Section s, TaskSection& t) {
  if (s.has("family")) {
    std::string name;
    s.read("family", name);
    try {
      t.family = parse_family(name);
    } catch (const Error& e) {
      s.error("family", e.what());
    }
  }
  s.read_int("n_pairs", t.n_pairs, 2);
  s.read_int("modulus", t.modulus, 2);
  s.read_int("payload_size", t.payload_size, 2);
  s.read_ints("copy_lengths", t.copy_lengths, 1);
  s.read_int("copy_count", t.copy_count, 2);
  s.read_int("copy_support", t.copy_support, 1);
  s.finish();
  if (t.copy_support >= t.copy_count) s.error("copy_support", "must be smaller than copy_count");
}

void read_search(Section s, SearchSpace& sp) {
  s.read_ints("layers", sp.layers, 0);
  if (s.has("sites")) sp.sites = s.read_enums("sites", parse_site);
  s.read("slots", sp.slots);
  if (s.has("channel_sets")) sp.channel_sets = s.read_enums("channel_sets", parse_channels);
  s.read_ints("head_budgets", sp.head_budgets, 1);
  s.read_ints("ranks", sp.ranks, 0);
  s.finish();
}

void read_thresholds(Section s, ThresholdSection& t) {
  s.read_double("theta_suff", t.locked.theta_suff, -10.0, 10.0);
  s.read_double("eps_nec", t.locked.eps_nec, 0.0, 1.0);
  s.read_double("control_margin", t.locked.control_margin, -10.0, 10.0);
  s.read_double("multiplicity_delta", t.multiplicity_delta, 0.0, 1.0);
  s.read_double("rank_delta", t.rank_delta, 0.0, 1.0);
  s.read_double("match_tolerance", t.match_tolerance, 0.0, 1.0);
  s.finish();
}

void read_budget(Section s, TrainBudget& b) {
  s.read_int("n_support", b.n_support, 1);
  s.read_int("steps", b.steps, 1);
  s.read_double("lr", b.lr, 0.0, 1.0);
  s.finish();
}

void read_budgets(Section s, BudgetSection& b) {
  s.read_int("train_steps", b.train.steps, 1);
  s.read_int("batch_size", b.train.batch_size, 1);
  s.read_double("lr", b.train.lr, 0.0, 1.0);
  s.read_double("weight_decay", b.train.weight_decay, 0.0, 1.0);
  s.read_double("grad_clip", b.train.grad_clip, 0.0, 1e6);
  s.read_int("checkpoint_every", b.train.checkpoint_every, 1);
  s.read_int("log_every", b.train.log_every, 1);
  s.read_int("copy_steps", b.copy_steps, 1);
  s.read_double("head_fraction", b.evaluate.head_fraction, 0.0, 1.0);
  s.read_int("random_headsets", b.evaluate.n_random_headsets, 1);
  s.read("baselines", b.evaluate.baselines);
  if (s.has("inversion")) read_budget(s.child("inversion"), b.evaluate.inversion_budget);
  if (s.has("lowrank")) read_budget(s.child("lowrank"), b.evaluate.lowrank_budget);
  s.read_int("lowrank_rank", b.evaluate.lowrank_rank, 1);
  if (s.has("relocation")) {
    auto r = s.child("relocation");
    r.read("slots", b.relocation.slots);
    r.read_ints("supports", b.relocation.supports, 1);
    r.read_ints("steps", b.relocation.steps, 1);
    r.read_double("lr", b.relocation.lr, 0.0, 1.0);
    r.read("frozen_random_base", b.relocation.frozen_random_base);
    r.finish();
    if (b.relocation.slots.empty() || b.relocation.supports.empty() || b.relocation.steps.empty()) {
      s.error("relocation", "grid is empty");
    }
  }
  s.finish();
}

void read_seeds(Section s, ManifestSeeds& seeds) {
  s.read("models", seeds.models);
  s.read("data", seeds.data);
  s.read("control", seeds.control);
  s.finish();
  if (seeds.models.empty()) s.error("models", "needs at least one seed");
}

json budget_json(const TrainBudget& b) { return {{"n_support", b.n_support}, {"steps", b.steps}, {"lr", b.lr}}; }

std::vector<std::string> names(const auto& items) {
  std::vector<std::string> out;
  for (const auto& x : items) out.emplace_back(to_string(x));
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, origin + ":" + std::to_string(line_at(text, e.byte == 0 ? 0 : e.byte - 1)) +
                                 ": invalid JSON (" + e.what() + ")");
  }
  RunConfig c = default_config();
  Section root(doc, {}, text, origin);
  if (root.has("model")) read_model(root.child("model"), c.model);
  if (root.has("task")) read_task(root.child("task"), c.task);
  if (root.has("split")) {
    auto s = root.child("split");
    s.read_int("n_support", c.split.n_support, 1);
    s.finish();
  }
  if (root.has("search_space")) read_search(root.child("search_space"), c.search);
  if (root.has("thresholds")) read_thresholds(root.child("thresholds"), c.thresholds);
  if (root.has("budgets")) read_budgets(root.child("budgets"), c.budgets);
  if (root.has("seeds")) read_seeds(root.child("seeds"), c.seeds);
  root.read("output_dir", c.output_dir);
  root.read("checkpoint_dir", c.checkpoint_dir);
  root.read("branch_id", c.branch_id);
  root.finish();
  if (c.branch_id.empty() || c.branch_id.find_first_of("/\\ ") != std::string::npos) {
    root.error("branch_id", "must be a non-empty name without separators");
  }
  try {
    c.vocab().validate(c.model.vocab_size);
  } catch (const Error& e) {
    root.error("task", e.what());
  }
  for (int l : c.search.layers) {
    if (l >= c.model.n_layers) root.error("search_space", "layer " + std::to_string(l) + " is beyond the model");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kConfig, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string canonical_config(const RunConfig& c) {
  json j;
  const auto& m = c.model;
  j["model"] = {{"n_layers", m.n_layers}, {"n_heads", m.n_heads},   {"d_model", m.d_model},
                {"d_head", m.d_head},     {"d_mlp", m.d_mlp},       {"vocab_size", m.vocab_size},
                {"max_positions", m.max_positions}};
  const auto& t = c.task;
  j["task"] = {{"family", std::string(to_string(t.family))},
               {"n_pairs", t.n_pairs},
               {"modulus", t.modulus},
               {"payload_size", t.payload_size},
               {"copy_lengths", t.copy_lengths},
               {"copy_count", t.copy_count},
               {"copy_support", t.copy_support}};
  j["split"] = {{"n_support", c.split.n_support}};
  const auto& s = c.search;
  j["search_space"] = {{"layers", s.layers},
                       {"sites", names(s.sites)},            {"slots", s.slots},
                       {"channel_sets", names(s.channel_sets)}, {"head_budgets", s.head_budgets},
                       {"ranks", s.ranks}};
  const auto& th = c.thresholds;
  j["thresholds"] = {{"theta_suff", th.locked.theta_suff},
                     {"eps_nec", th.locked.eps_nec},
                     {"control_margin", th.locked.control_margin},
                     {"multiplicity_delta", th.multiplicity_delta},
                     {"rank_delta", th.rank_delta},
                     {"match_tolerance", th.match_tolerance}};
  const auto& b = c.budgets;
  const auto& r = b.relocation;
  j["budgets"] = {{"train_steps", b.train.steps},
                  {"batch_size", b.train.batch_size},
                  {"lr", b.train.lr},
                  {"weight_decay", b.train.weight_decay},
                  {"grad_clip", b.train.grad_clip},
                  {"checkpoint_every", b.train.checkpoint_every},
                  {"log_every", b.train.log_every},
                  {"copy_steps", b.copy_steps},
                  {"head_fraction", b.evaluate.head_fraction},
                  {"random_headsets", b.evaluate.n_random_headsets},
                  {"baselines", b.evaluate.baselines},
                  {"inversion", budget_json(b.evaluate.inversion_budget)},
                  {"lowrank", budget_json(b.evaluate.lowrank_budget)},
                  {"lowrank_rank", b.evaluate.lowrank_rank},
                  {"relocation",
                   {{"slots", r.slots},
                    {"supports", r.supports},
                    {"steps", r.steps},
                    {"lr", r.lr},
                    {"frozen_random_base", r.frozen_random_base}}}};
  j["seeds"] = {{"models", c.seeds.models}, {"data", c.seeds.data}, {"control", c.seeds.control}};
  j["branch_id"] = c.branch_id;
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

}  // namespace patchlab::cli
