#include "patchlab/model/weights.hpp"

#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/numerics/hash.hpp"

namespace patchlab {
namespace {

constexpr double kInitScale = 0.02;

bool is_gain(const std::string& name) { return name.ends_with(".gain"); }
bool is_bias(const std::string& name) { return name.ends_with("bias") || name.find(".b_") != std::string::npos; }

}  // namespace

Weights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto m = static_cast<std::size_t>(cfg.d_mlp);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  Weights w;
  w.config = cfg;
  w.tok_emb = Tensor({v, d});
  w.pos_emb = Tensor({static_cast<std::size_t>(cfg.max_positions), d});
  w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& L : w.layers) {
    L.ln1_gain = Tensor({d});
    L.ln1_bias = Tensor({d});
    L.w_q = Tensor({d, d});
    L.b_q = Tensor({d});
    L.w_k = Tensor({d, d});
    L.b_k = Tensor({d});
    L.w_v = Tensor({d, d});
    L.b_v = Tensor({d});
    L.w_o = Tensor({d, d});
    L.b_o = Tensor({d});
    L.ln2_gain = Tensor({d});
    L.ln2_bias = Tensor({d});
    L.w_in = Tensor({d, m});
    L.b_in = Tensor({m});
    L.w_out = Tensor({m, d});
    L.b_out = Tensor({d});
  }
  w.lnf_gain = Tensor({d});
  w.lnf_bias = Tensor({d});
  w.unembed = Tensor({d, v});
  return w;
}

Weights init_model(const ModelConfig& cfg, Rng& rng) {
  Weights w = zero_weights(cfg);
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    if (is_gain(name)) {
      t.fill(1.0);
    } else if (!is_bias(name)) {
      for (auto& x : t.data()) x = kInitScale * rng.normal();
    }
  });
  return w;
}

std::vector<std::string> parameter_names(const ModelConfig& cfg) {
  Weights w = zero_weights(cfg);
  std::vector<std::string> names;
  for_each_parameter(w, [&](const std::string& name, Tensor&) { names.push_back(name); });
  return names;
}

bool operator==(const Weights& a, const Weights& b) {
  if (!(a.config == b.config) || a.layers.size() != b.layers.size()) return false;
  std::vector<const Tensor*> ta, tb;
  for_each_parameter(a, [&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  for_each_parameter(b, [&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

std::string weights_digest(const Weights& w) {
  std::ostringstream os;
  const auto& c = w.config;
  os << c.n_layers << ',' << c.n_heads << ',' << c.d_model << ',' << c.d_head << ',' << c.d_mlp << ','
     << c.vocab_size << ',' << c.max_positions << ';';
  for_each_parameter(w, [&](const std::string& name, const Tensor& t) {
    os << name << ':' << t.size() << ';';
    os << sha256_hex(t.data()) << ';';
  });
  return sha256_hex(os.str());
}

bool all_finite(const Weights& w) {
  bool ok = true;
  for_each_parameter(w, [&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
  return ok;
}

}  // namespace patchlab
