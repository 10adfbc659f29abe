#pragma once

#include <string>
#include <vector>

#include "patchlab/model/config.hpp"
#include "patchlab/numerics/rng.hpp"
#include "patchlab/numerics/tensor.hpp"

namespace patchlab {

// Projections use the row-vector convention y = x W + b, so W is [in x out].
struct LayerWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v;
  Tensor w_o, b_o;
  Tensor ln2_gain, ln2_bias;
  Tensor w_in, b_in, w_out, b_out;
};

struct Weights {
  ModelConfig config;
  Tensor tok_emb;  // [vocab x d_model]
  Tensor pos_emb;  // [max_positions x d_model]
  std::vector<LayerWeights> layers;
  Tensor lnf_gain, lnf_bias;
  Tensor unembed;  // [d_model x vocab]

  friend bool operator==(const Weights& a, const Weights& b);
};

// Visit every parameter as (canonical name, tensor) in a fixed order.
template <typename W, typename Fn>
void for_each_parameter(W& w, Fn&& fn) {
  fn(std::string("tok_emb"), w.tok_emb);
  fn(std::string("pos_emb"), w.pos_emb);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    fn(p + "ln1.gain", L.ln1_gain);
    fn(p + "ln1.bias", L.ln1_bias);
    fn(p + "attn.w_q", L.w_q);
    fn(p + "attn.b_q", L.b_q);
    fn(p + "attn.w_k", L.w_k);
    fn(p + "attn.b_k", L.b_k);
    fn(p + "attn.w_v", L.w_v);
    fn(p + "attn.b_v", L.b_v);
    fn(p + "attn.w_o", L.w_o);
    fn(p + "attn.b_o", L.b_o);
    fn(p + "ln2.gain", L.ln2_gain);
    fn(p + "ln2.bias", L.ln2_bias);
    fn(p + "mlp.w_in", L.w_in);
    fn(p + "mlp.b_in", L.b_in);
    fn(p + "mlp.w_out", L.w_out);
    fn(p + "mlp.b_out", L.b_out);
  }
  fn(std::string("ln_f.gain"), w.lnf_gain);
  fn(std::string("ln_f.bias"), w.lnf_bias);
  fn(std::string("unembed"), w.unembed);
}

// All-zero weights with the shapes implied by cfg (layer-norm gains included).
Weights zero_weights(const ModelConfig& cfg);

// Gaussian(0, 0.02) embeddings and projections, zero biases, unit LN gains.
Weights init_model(const ModelConfig& cfg, Rng& rng);

std::vector<std::string> parameter_names(const ModelConfig& cfg);

// SHA-256 over the config and every parameter payload.
std::string weights_digest(const Weights& w);

bool all_finite(const Weights& w);

}  // namespace patchlab
