#pragma once

// Analytic gradients against central differences on random small models.
// Shared by the model unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include "patchlab/model/transformer.hpp"
#include "patchlab/numerics/finite_diff.hpp"

namespace patchlab::test {

inline constexpr double kRelFloor = 1e-6;

struct GradCheckStats {
  long coordinates = 0;
  long within_1e4 = 0;
  double worst = 0.0;
  double fraction() const { return coordinates ? static_cast<double>(within_1e4) / coordinates : 0.0; }
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

inline ModelConfig random_small_config(Rng& rng) {
  ModelConfig c;
  c.n_layers = rng.uniform_int(1, 2);
  c.n_heads = rng.uniform_int(1, 3);
  c.d_head = rng.uniform_int(2, 4);
  c.d_model = c.n_heads * c.d_head;
  c.d_mlp = rng.uniform_int(4, 12);
  c.vocab_size = rng.uniform_int(5, 12);
  c.max_positions = 8;
  return c;
}

inline std::vector<TrainExample> random_batch(const ModelConfig& c, Rng& rng) {
  std::vector<TrainExample> batch;
  const int n = rng.uniform_int(1, 3);
  for (int e = 0; e < n; ++e) {
    TrainExample ex;
    const int len = rng.uniform_int(3, 6);
    for (int t = 0; t < len; ++t) ex.tokens.push_back(rng.uniform_int(0, c.vocab_size - 1));
    for (int t = 1; t < len; t += 2) ex.targets.emplace_back(t, rng.uniform_int(0, c.vocab_size - 1));
    batch.push_back(std::move(ex));
  }
  return batch;
}

// Every parameter coordinate of one random model is compared.
inline GradCheckStats check_model_gradients(std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed);
  const ModelConfig cfg = random_small_config(rng);
  Weights w = init_model(cfg, rng);
  std::uint64_t k = 0;
  for_each_parameter(w, [&](const std::string&, Tensor& t) {
    Rng r = rng.child(k++);
    for (auto& v : t.data()) v += 0.3 * r.normal();
  });
  const auto batch = random_batch(cfg, rng);
  const LossGrad lg = loss_and_grad(w, batch, all_parameters(cfg));

  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
  for_each_parameter(w, [&](const std::string&, Tensor& t) { params.push_back(&t); });
  for_each_parameter(lg.grads, [&](const std::string&, const Tensor& t) { grads.push_back(&t); });

  GradCheckStats stats;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& target = *params[p];
    const Tensor original = target;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& x) {
          target = x;
          return batch_loss(w, batch);
        },
        original, h);
    target = original;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double e = rel_error((*grads[p])[i], numeric[i]);
      ++stats.coordinates;
      if (e < 1e-4) ++stats.within_1e4;
      stats.worst = std::max(stats.worst, e);
    }
  }
  return stats;
}

}  // namespace patchlab::test
