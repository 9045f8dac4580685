#include <benchmark/benchmark.h>

#include "hmpcnn/constructions.hpp"
#include "hmpcnn/hmp_model.hpp"

using namespace hmpcnn;

namespace {

void BM_eval_max_pool(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const HmpModel m = make_model({level, NodeFamily::soft_max_blend, d, d, 0.5}, 1);
  rng::Stream st(2, rng::Tag::generic, 0);
  const ImageGrid img = ImageGrid::random_uniform(d, d, st);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_max_pool(m, img));
  }
}
BENCHMARK(BM_eval_max_pool)->Args({1, 8})->Args({2, 8})->Args({2, 16});

void BM_link_network(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  const HatBasis b = make_hat_basis(K);
  double z = 0.0;
  for (auto _ : state) {
    z += 1e-4;
    if (z > 1.0) z = 0.0;
    benchmark::DoNotOptimize(link_eval_network(b, z));
  }
}
BENCHMARK(BM_link_network)->Arg(6)->Arg(48);

void BM_compile_tree(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  const NodeNetTree tree = random_node_tree(level, 2, 8, 7);
  const int d = 2 * (1 << level);
  for (auto _ : state) {
    benchmark::DoNotOptimize(compile_hmp_to_cnn(tree, d, d));
  }
}
BENCHMARK(BM_compile_tree)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

}  // namespace
