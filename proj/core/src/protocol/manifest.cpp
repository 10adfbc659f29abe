#include "patchlab/protocol/manifest.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "patchlab/error.hpp"
#include "patchlab/numerics/hash.hpp"

namespace patchlab {

using nlohmann::json;

std::string_view to_string(ManifestStatus s) {
  switch (s) {
    case ManifestStatus::kOpen: return "OPEN";
    case ManifestStatus::kLocked: return "LOCKED";
    case ManifestStatus::kConsumed: return "CONSUMED";
  }
  return "?";
}

namespace {

ManifestStatus parse_status(const std::string& text) {
  for (auto s : {ManifestStatus::kOpen, ManifestStatus::kLocked, ManifestStatus::kConsumed}) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::kIo, "unknown manifest status '" + text + "'");
}

json key_to_json(const InterfaceKey& k) {
  json j;
  j["layer"] = k.layer;
  j["site"] = std::string(to_string(k.site));
  j["heads"] = k.heads ? json(*k.heads) : json("ALL");
  j["slots"] = k.slots;
  return j;
}

InterfaceKey key_from_json(const json& j) {
  InterfaceKey k;
  k.layer = j.at("layer").get<int>();
  k.site = parse_site(j.at("site").get<std::string>());
  if (!j.at("heads").is_string()) k.heads = j.at("heads").get<std::vector<int>>();
  k.slots = j.at("slots").get<std::vector<std::string>>();
  return k;
}

json content_to_json(const ManifestContent& c) {
  json j;
  j["branch_id"] = c.branch_id;
  j["family_id"] = c.family_id;
  j["config_hash"] = c.config_hash;
  j["support_hash"] = c.support_hash;
  j["query_hash"] = c.query_hash;
  if (c.selection) {
    const auto& s = *c.selection;
    json sj;
    sj["key"] = key_to_json(s.key);
    sj["channels"] = std::string(to_string(s.channels));
    sj["rank"] = s.rank ? json(*s.rank) : json("FULL");
    sj["head_budget"] = s.head_budget;
    sj["heads_per_model"] = s.heads_per_model;
    sj["support_score"] = s.support_score;
    j["selection"] = sj;
  } else {
    j["selection"] = nullptr;
  }
  j["thresholds"] = {{"theta_suff", c.thresholds.theta_suff},
                     {"eps_nec", c.thresholds.eps_nec},
                     {"control_margin", c.thresholds.control_margin}};
  j["seeds"] = {{"models", c.seeds.models}, {"data", c.seeds.data}, {"control", c.seeds.control}};
  json cands = json::array();
  for (const auto& e : c.ledger.candidates) cands.push_back({{"candidate", e.candidate}, {"score", e.score}});
  j["ledger"] = {{"axis_counts", c.ledger.axis_counts},
                 {"n_candidates", c.ledger.n_candidates},
                 {"total_evaluations", c.ledger.total_evaluations},
                 {"multiplicity_delta", c.ledger.multiplicity_delta},
                 {"candidates", cands}};
  json ranks = json::array();
  for (const auto& per_model : c.head_rankings) {
    json r = json::array();
    for (const auto& h : per_model) r.push_back({h.layer, h.head});
    ranks.push_back(r);
  }
  j["head_rankings"] = ranks;
  j["rank_star"] = c.rank_star;
  j["notes"] = c.notes;
  return j;
}

ManifestContent content_from_json(const json& j) {
  ManifestContent c;
  c.branch_id = j.at("branch_id").get<std::string>();
  c.family_id = j.at("family_id").get<std::string>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.support_hash = j.at("support_hash").get<std::string>();
  c.query_hash = j.at("query_hash").get<std::string>();
  if (!j.at("selection").is_null()) {
    const auto& sj = j.at("selection");
    Selection s;
    s.key = key_from_json(sj.at("key"));
    s.channels = parse_channels(sj.at("channels").get<std::string>());
    if (!sj.at("rank").is_string()) s.rank = sj.at("rank").get<int>();
    s.head_budget = sj.at("head_budget").get<int>();
    s.heads_per_model = sj.at("heads_per_model").get<std::vector<std::vector<int>>>();
    s.support_score = sj.at("support_score").get<double>();
    c.selection = s;
  }
  const auto& t = j.at("thresholds");
  c.thresholds = {t.at("theta_suff").get<double>(), t.at("eps_nec").get<double>(),
                  t.at("control_margin").get<double>()};
  const auto& s = j.at("seeds");
  c.seeds.models = s.at("models").get<std::vector<std::uint64_t>>();
  c.seeds.data = s.at("data").get<std::uint64_t>();
  c.seeds.control = s.at("control").get<std::uint64_t>();
  const auto& l = j.at("ledger");
  c.ledger.axis_counts = l.at("axis_counts").get<std::map<std::string, int>>();
  c.ledger.n_candidates = l.at("n_candidates").get<int>();
  c.ledger.total_evaluations = l.at("total_evaluations").get<int>();
  c.ledger.multiplicity_delta = l.at("multiplicity_delta").get<double>();
  for (const auto& e : l.at("candidates")) {
    c.ledger.candidates.push_back({e.at("candidate").get<std::string>(), e.at("score").get<double>()});
  }
  for (const auto& per_model : j.at("head_rankings")) {
    std::vector<HeadId> r;
    for (const auto& h : per_model) r.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
    c.head_rankings.push_back(r);
  }
  c.rank_star = j.at("rank_star").get<int>();
  c.notes = j.at("notes").get<std::map<std::string, std::string>>();
  return c;
}

}  // namespace

std::string canonical_json(const ManifestContent& content) { return content_to_json(content).dump(); }

std::string manifest_hash(const ManifestContent& content) { return sha256_hex(canonical_json(content)); }

LockManifest::LockManifest(ManifestContent draft) : content_(std::move(draft)) {}

void LockManifest::edit(const std::function<void(ManifestContent&)>& fn) {
  require(status_ == ManifestStatus::kOpen, ErrorCode::kLockViolation,
          "manifest " + content_.branch_id + " is " + std::string(to_string(status_)) + " and cannot be modified");
  fn(content_);
}

void LockManifest::freeze() {
  require(status_ == ManifestStatus::kOpen, ErrorCode::kState,
          "manifest " + content_.branch_id + " is already " + std::string(to_string(status_)));
  require(content_.selection.has_value(), ErrorCode::kState, "cannot freeze a manifest without a selection");
  hash_ = manifest_hash(content_);
  status_ = ManifestStatus::kLocked;
}

void LockManifest::require_locked(std::string_view action) const {
  require(status_ != ManifestStatus::kOpen, ErrorCode::kLockViolation,
          std::string(action) + " needs a locked manifest; branch " + content_.branch_id + " is still OPEN");
}

void LockManifest::consume() {
  require_locked("query evaluation");
  require(status_ == ManifestStatus::kLocked, ErrorCode::kLockViolation,
          "branch " + content_.branch_id + " was already evaluated on query data; start a new branch");
  status_ = ManifestStatus::kConsumed;
}

std::string LockManifest::to_json() const {
  json doc;
  doc["content"] = content_to_json(content_);
  doc["status"] = std::string(to_string(status_));
  doc["manifest_hash"] = hash_;
  return doc.dump(2) + "\n";
}

LockManifest LockManifest::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, std::string("manifest is not valid JSON: ") + e.what());
  }
  LockManifest m;
  try {
    m.content_ = content_from_json(doc.at("content"));
    m.status_ = parse_status(doc.at("status").get<std::string>());
    m.hash_ = doc.at("manifest_hash").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kLockViolation, std::string("manifest does not match its schema: ") + e.what());
  }
  if (m.status_ != ManifestStatus::kOpen) {
    require(m.hash_ == manifest_hash(m.content_), ErrorCode::kLockViolation,
            "manifest " + m.content_.branch_id + " was modified after freeze (hash mismatch)");
  }
  return m;
}

void save_manifest(const LockManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write manifest " + path);
  out << m.to_json();
  require(out.good(), ErrorCode::kIo, "failed writing manifest " + path);
}

LockManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot read manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return LockManifest::from_json(ss.str());
}

}  // namespace patchlab
