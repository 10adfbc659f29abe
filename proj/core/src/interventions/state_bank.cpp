#include "patchlab/interventions/state_bank.hpp"

#include "patchlab/error.hpp"

namespace patchlab {

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::kDonor: return "DONOR";
    case Condition::kReceiver: return "RECEIVER";
    case Condition::kClean: return "CLEAN";
    case Condition::kCorrupt: return "CORRUPT";
    case Condition::kCompiled: return "COMPILED";
    case Condition::kCentered: return "CENTERED";
  }
  return "?";
}

std::string_view to_string(SplitTag s) { return s == SplitTag::kSupport ? "support" : "query"; }

std::vector<Address> Interface::resolve(const SlotMap& slots, const ModelConfig& cfg) const {
  std::vector<Address> out;
  for (const auto& key : keys) {
    auto part = patchlab::resolve(key, channels, slots, cfg);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<InterventionSpec> Interface::specs(std::span<const Tensor> vectors, const SlotMap& slots,
                                               const ModelConfig& cfg, WriteMode mode) const {
  std::vector<InterventionSpec> out;
  std::size_t offset = 0;
  for (const auto& key : keys) {
    const auto n = patchlab::resolve(key, channels, slots, cfg).size();
    require(offset + n <= vectors.size(), ErrorCode::kInvalidArgument,
            "too few vectors for interface " + describe());
    InterventionSpec spec;
    spec.key = key;
    spec.channels = channels;
    spec.mode = mode;
    spec.source.assign(vectors.begin() + static_cast<std::ptrdiff_t>(offset),
                       vectors.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    out.push_back(std::move(spec));
  }
  require(offset == vectors.size(), ErrorCode::kInvalidArgument, "too many vectors for interface " + describe());
  return out;
}

std::string Interface::describe() const {
  std::string out;
  for (const auto& key : keys) {
    if (!out.empty()) out += "+";
    out += patchlab::describe(key);
  }
  return out + "[" + std::string(to_string(channels)) + "]";
}

Interface resid_interface(const InterfaceKey& key) {
  require(is_resid_site(key.site), ErrorCode::kInvalidArgument, "resid_interface needs a residual site");
  return {{key}, Channels::kResid};
}

Interface downstream_attention(const InterfaceKey& resid_key, Channels channels, const ModelConfig& cfg,
                               std::optional<std::vector<int>> heads) {
  require(is_resid_site(resid_key.site), ErrorCode::kInvalidArgument, "downstream KV needs a residual key");
  require(channels != Channels::kResid, ErrorCode::kInvalidArgument, "downstream KV needs a Q/K/V channel set");
  Interface out;
  out.channels = channels;
  const int first = resid_key.site == Site::kResidBlock ? resid_key.layer : resid_key.layer + 1;
  for (int l = first; l < cfg.n_layers; ++l) {
    out.keys.push_back({l, Site::kK, heads, resid_key.slots});
  }
  return out;
}

StateBank capture(const Weights& w, std::span<const TaskInstance> instances, const Interface& iface,
                  Provenance provenance, std::span<const std::vector<InterventionSpec>> conditions) {
  require(conditions.empty() || conditions.size() == instances.size(), ErrorCode::kInvalidArgument,
          "one condition list per instance needed");
  std::vector<SequenceRequest> reqs;
  reqs.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    SequenceRequest r;
    r.tokens = instances[i].tokens;
    r.slots = instances[i].slots;
    if (!conditions.empty()) r.interventions = conditions[i];
    for (const auto& key : iface.keys) r.probes.push_back({key, iface.channels});
    reqs.push_back(std::move(r));
  }
  const auto results = forward_batch(w, reqs);

  StateBank bank;
  bank.iface = iface;
  bank.provenance = std::move(provenance);
  bank.entries.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    BankEntry e;
    e.instance_id = instances[i].id;
    e.pair_id = instances[i].pair_id;
    e.route = instances[i].route;
    for (const auto& a : iface.resolve(instances[i].slots, w.config)) {
      e.vectors.push_back(results[i].cache.at(a));
    }
    if (!bank.entries.empty()) {
      require(e.vectors.size() == bank.n_vectors(), ErrorCode::kInvalidArgument,
              "instances resolve the interface to different address counts");
    }
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

std::vector<std::vector<InterventionSpec>> bank_specs(const StateBank& bank, std::span<const TaskInstance> instances,
                                                      const ModelConfig& cfg, WriteMode mode) {
  require(bank.entries.size() == instances.size(), ErrorCode::kInvalidArgument,
          "bank and instance list differ in length");
  std::vector<std::vector<InterventionSpec>> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.push_back(bank.iface.specs(bank.entries[i].vectors, instances[i].slots, cfg, mode));
  }
  return out;
}

std::vector<std::vector<InterventionSpec>> combine(std::span<const std::vector<std::vector<InterventionSpec>>> parts) {
  std::vector<std::vector<InterventionSpec>> out;
  for (const auto& part : parts) {
    if (part.empty()) continue;
    if (out.empty()) out.resize(part.size());
    require(part.size() == out.size(), ErrorCode::kInvalidArgument, "spec lists differ in length");
    for (std::size_t i = 0; i < part.size(); ++i) out[i].insert(out[i].end(), part[i].begin(), part[i].end());
  }
  return out;
}

}  // namespace patchlab
