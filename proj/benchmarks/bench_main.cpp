#include <benchmark/benchmark.h>

#include "patchlab/model/transformer.hpp"
#include "patchlab/numerics/linalg.hpp"
#include "patchlab/tasks/tasks.hpp"
#include "patchlab/training/training.hpp"

namespace {

using namespace patchlab;

ModelConfig toy() { return ModelConfig{}; }

void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  const Weights w = init_model(toy(), rng);
  const std::vector<int> tokens = {30, 3, 10, 1, 11};
  for (auto _ : state) benchmark::DoNotOptimize(forward(w, tokens).logits);
}
BENCHMARK(BM_Forward);

void BM_LossAndGrad(benchmark::State& state) {
  Rng rng(2);
  const ModelConfig cfg = toy();
  const Weights w = init_model(cfg, rng);
  std::vector<TrainExample> batch;
  for (const auto& inst : gen_routing(Family::kTriop, static_cast<int>(state.range(0)) / 2, Vocab{10, 16}, rng))
    batch.push_back(training_example(inst));
  const auto mask = all_parameters(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(w, batch, mask).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_LossAndGrad)->Arg(16)->Arg(64);

void BM_TruncatedSvd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Tensor m({n, n});
  for (auto& v : m.data()) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(truncated_svd(m, 4));
}
BENCHMARK(BM_TruncatedSvd)->Arg(16)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
