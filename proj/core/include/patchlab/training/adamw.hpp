#pragma once

#include <vector>

#include "patchlab/numerics/tensor.hpp"

namespace patchlab {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay over a fixed list of tensors. Decay is
// applied only to tensors flagged in `decay`.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, std::vector<Tensor*> params, std::vector<bool> decay = {});

  void step(const std::vector<const Tensor*>& grads);
  int steps_taken() const noexcept { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor*> params_;
  std::vector<bool> decay_;
  std::vector<Tensor> m_, v_;
  int t_ = 0;
};

}  // namespace patchlab
