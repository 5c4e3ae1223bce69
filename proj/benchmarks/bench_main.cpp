#include <benchmark/benchmark.h>

#include "gen.hpp"
#include "panconf/confidence.hpp"
#include "panconf/simulator.hpp"

using namespace panconf;

namespace {

MaskPrediction prediction(std::size_t queries, std::size_t side) {
  Rng rng(1);
  MaskPrediction pred;
  pred.num_classes = 3;
  pred.class_logits.resize(queries * 4);
  for (auto& z : pred.class_logits) z = 3.0 * rng.normal();
  pred.mask_logits = PlaneStack(queries, side, side);
  for (auto& s : pred.mask_logits.values) s = 4.0 * rng.normal();
  return pred;
}

void BM_Fusion(benchmark::State& state) {
  const auto pred = prediction(16, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fuse_panoptic(pred, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Fusion)->Arg(64)->Arg(128);

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  CostMatrix cost(n, n / 2);
  for (auto& v : cost.values) v = rng.uniform(0.0, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(cost));
}
BENCHMARK(BM_Hungarian)->Arg(16)->Arg(100)->Arg(200);

void BM_SamplePoints(benchmark::State& state) {
  Rng rng(3);
  const auto np = static_cast<std::size_t>(state.range(0));
  const auto conf = gen::blocky_confidence(rng, 128, 128, 6);
  const auto affinity = sampling_affinity(gen::random_plane(rng, 128, 128), conf, 0.8);
  for (auto _ : state) {
    auto draw = rng.split(0);
    benchmark::DoNotOptimize(sample_points(affinity, np, 0.75, draw));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SamplePoints)->Arg(128)->Arg(12544);

void BM_ToyForward(benchmark::State& state) {
  Rng rng(4);
  const auto model = ToyModel::random(16, 32, 3, 0.5, rng);
  const auto features = gen::random_features(rng, 32, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(toy_forward(model, features));
}
BENCHMARK(BM_ToyForward);

// One adaptation step, amortized over a short default-sized run.
void BM_SimulatorSteps(benchmark::State& state) {
  SimConfig cfg;
  cfg.pretrain_iters = 0;
  cfg.iterations = 50;
  cfg.freeze_iters = 10;
  cfg.checkpoint_every = 50;
  cfg.eval_images = 1;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(cfg));
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_SimulatorSteps)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
