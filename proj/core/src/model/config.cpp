#include "patchlab/model/config.hpp"

#include "patchlab/error.hpp"

namespace patchlab {

void ModelConfig::validate() const {
  require(n_layers > 0 && n_heads > 0 && d_model > 0 && d_head > 0 && d_mlp > 0 && vocab_size > 0 &&
              max_positions > 0,
          ErrorCode::kInvalidArgument, "model config fields must all be positive");
  require(d_model == n_heads * d_head, ErrorCode::kInvalidArgument,
          "model config: d_model must equal n_heads * d_head");
}

}  // namespace patchlab
