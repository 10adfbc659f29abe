#include "patchlab/training/adamw.hpp"

#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

AdamW::AdamW(AdamWConfig cfg, std::vector<Tensor*> params, std::vector<bool> decay)
    : cfg_(cfg), params_(std::move(params)), decay_(std::move(decay)) {
  require(cfg_.lr > 0.0 && cfg_.eps > 0.0, ErrorCode::kInvalidArgument, "AdamW needs positive lr and eps");
  if (decay_.empty()) decay_.assign(params_.size(), cfg_.weight_decay > 0.0);
  require(decay_.size() == params_.size(), ErrorCode::kInvalidArgument, "decay flags size mismatch");
  for (const auto* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void AdamW::step(const std::vector<const Tensor*>& grads) {
  require(grads.size() == params_.size(), ErrorCode::kInvalidArgument, "one gradient per parameter needed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i]->data();
    const auto g = grads[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    require(g.size() == p.size(), ErrorCode::kInvalidArgument, "gradient shape mismatch");
    const double decay = decay_[i] ? cfg_.lr * cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      p[j] -= decay * p[j];
      p[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

}  // namespace patchlab
