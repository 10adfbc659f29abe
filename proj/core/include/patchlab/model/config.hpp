#pragma once

namespace patchlab {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_head = 16;
  int d_mlp = 256;
  int vocab_size = 40;
  int max_positions = 32;

  // Throws kInvalidArgument unless every field is positive and
  // d_model == n_heads * d_head.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace patchlab
