#include <benchmark/benchmark.h>

#include "tsae/training.hpp"

namespace {

using namespace tsae;

RealMatrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  RealMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto a = static_cast<std::size_t>(state.range(0));
  const ConvLayerSpec layer{8, 16, 8, 4, Activation::tanh};
  const RealMatrix in = filled(8, a, 1);
  const RealMatrix w = filled(16, 8 * 8, 2);
  const RealMatrix b = filled(16, 1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv1d_forward(in, layer, w, b));
}
BENCHMARK(BM_Conv1dForward)->Arg(122)->Arg(500);

void BM_EncoderForward(benchmark::State& state) {
  const auto n_a = static_cast<std::size_t>(state.range(0));
  const Encoder enc(EncoderConfig::default_schedule(n_a, 3));
  ParamStore p;
  enc.init_params(p, 1);
  const RealMatrix window = filled(n_a, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(window, p));
}
BENCHMARK(BM_EncoderForward)->Arg(64)->Arg(500);

void BM_GruRollout(benchmark::State& state) {
  const auto n_b = static_cast<std::size_t>(state.range(0));
  const DecoderConfig cfg{n_b, 3, 1};
  const Decoder dec(cfg);
  ParamStore p;
  dec.init_params(p, 1);
  const GruParams g = dec.extract(p);
  const RealMatrix u = filled(n_b, 1, 5);
  const LatentState x{{0.1, -0.2, 0.3}};
  for (auto _ : state) benchmark::DoNotOptimize(decoder_rollout(x, u.values(), g, cfg));
}
BENCHMARK(BM_GruRollout)->Arg(32)->Arg(200);

void BM_BatchGradients(benchmark::State& state) {
  GenerateOptions gen;
  gen.cycles = 2;
  gen.soc_end = 0.79;
  const auto ds = std::make_shared<const Dataset>(normalize(generate_dataset(SimConfig{}, gen)).first);
  TrainConfig cfg;
  cfg.n_a = 64;
  cfg.n_b = 32;
  cfg.n_xs = 2;
  const WindowSet windows = make_windows(ds, cfg.n_a, cfg.n_b, 1);
  Model model = Model::create(cfg);
  model.init_params(1);
  const Batch batch = batch_sampler(windows, cfg, 1).front();
  ParamStore params = model.params();
  for (auto _ : state) {
    params.zero_grad();
    benchmark::DoNotOptimize(compute_batch_gradients(model, params, windows, batch, BatchOptions{0.1, true, 1}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.batch_groups * cfg.run_length));
}
BENCHMARK(BM_BatchGradients);

}  // namespace
BENCHMARK_MAIN();
