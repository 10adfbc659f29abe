#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <string>
#include <vector>

#include "patchlab/error.hpp"
#include "patchlab/model/weights.hpp"
#include "patchlab/tasks/tasks.hpp"

namespace patchlab::test {

// Small enough for finite differences, large enough to have two heads.
inline ModelConfig tiny_config(int vocab = 33) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_head = 4;
  c.d_mlp = 16;
  c.vocab_size = vocab;
  c.max_positions = 16;
  return c;
}

inline Vocab tiny_vocab() { return {10, 16}; }

// Untrained weights with enlarged scale so interventions move logits visibly.
inline Weights random_weights(const ModelConfig& cfg, std::uint64_t seed, double scale = 10.0) {
  Rng rng(seed);
  Weights w = init_model(cfg, rng);
  std::uint64_t k = 0;
  for_each_parameter(w, [&](const std::string& name, Tensor& t) {
    Rng r = rng.child(k++);
    if (name.find("gain") != std::string::npos) return;
    for (auto& v : t.data()) v = v * scale + 0.01 * r.normal();
  });
  return w;
}

inline void expect_error(const std::function<void()>& fn, ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace patchlab::test
