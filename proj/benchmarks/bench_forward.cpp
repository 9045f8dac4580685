#include <benchmark/benchmark.h>

#include "hmpcnn/rng.hpp"
#include "hmpcnn/training.hpp"

using namespace hmpcnn;

namespace {

Predictor make_predictor(int d, int layers, int channels) {
  CnnArchitecture ca{d, d, std::vector<int>(layers, channels), std::vector<int>(layers, 2)};
  FnnArchitecture fa{{8}};
  return init_predictor(ca, fa, {4.0}, 0.5, 1, 0);
}

ImageGrid make_image(int d) {
  rng::Stream st(2, rng::Tag::generic, 0);
  return ImageGrid::random_uniform(d, d, st);
}

void BM_cnn_forward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int layers = static_cast<int>(state.range(1));
  const Predictor p = make_predictor(d, layers, 8);
  const ImageGrid img = make_image(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(p(img));
  }
}
BENCHMARK(BM_cnn_forward)->Args({8, 2})->Args({8, 4})->Args({16, 4});

void BM_backward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Predictor p = make_predictor(d, 3, 8);
  const ImageGrid img = make_image(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(backward(p, img, +1));
  }
}
BENCHMARK(BM_backward)->Arg(8)->Arg(16);

void BM_train_epoch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const HmpModel m = make_model({1, NodeFamily::affine_clamped, 8, 8, 0.5}, 3);
  const Dataset ds = sample_dataset(m, n, 4);
  CnnArchitecture ca{8, 8, {8, 8}, {2, 2}};
  FnnArchitecture fa{{8}};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.restarts = 1;
  cfg.seed = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(ca, fa, {3.0}, ds, cfg));
  }
}
BENCHMARK(BM_train_epoch)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
