#include <benchmark/benchmark.h>

#include "kcal/energy.hpp"
#include "kcal/homography.hpp"
#include "kcal/ops.hpp"
#include "kcal/rng.hpp"
#include "kcal/scene.hpp"
#include "kcal/trainer.hpp"

namespace {

using namespace kcal;

Tensor random_tensor(Shape shape, RandomStream& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  RandomStream rng(1);
  const Tensor x = random_tensor({4, c, n, n}, rng);
  const Tensor w = random_tensor({2 * c, c, 4, 4}, rng);
  const Tensor b = random_tensor({2 * c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 2, 1));
}
BENCHMARK(BM_Conv2d)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_Dlt(benchmark::State& state) {
  RandomStream rng(2);
  const Homography h = Homography::from_row_major({1.1, 0.05, 3.0, -0.04, 0.95, -2.0, 1e-3, -2e-3, 1.0});
  CorrespondenceSet pts;
  for (int i = 0; i < state.range(0); ++i) {
    const Eigen::Vector2d p(rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0));
    pts.push_back({h.apply(p), p});
  }
  for (auto _ : state) benchmark::DoNotOptimize(estimate_homography_dlt(pts));
}
BENCHMARK(BM_Dlt)->Arg(4)->Arg(16)->Arg(64);

void BM_SampleScene(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const SceneSpec spec = SceneSpec::with_extent(n, n);
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_scene(spec, i++));
}
BENCHMARK(BM_SampleScene)->Arg(64)->Arg(128);

void BM_EnergyImage(benchmark::State& state) {
  const PairedSample s = sample_scene(SceneSpec::with_extent(64, 64), 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(build_energy_image(s.scene.width(), s.scene.height(), s.annotations, s.homography));
}
BENCHMARK(BM_EnergyImage);

TensorDataset small_dataset(std::size_t count) {
  const SceneSpec spec = SceneSpec::with_extent(64, 64);
  std::vector<LoadedPair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    PairedSample s = sample_scene(spec, i);
    Raster<float> energy(s.energy.width(), s.energy.height(), 1);
    for (std::size_t k = 0; k < energy.size(); ++k) energy.data()[k] = static_cast<float>(s.energy.data()[k]);
    pairs.push_back({s.id, std::move(s.scene), std::move(energy)});
  }
  return TensorDataset::from_pairs(pairs, 8.0);
}

// One epoch of four batches at the default desk configuration.
void BM_TrainEpoch(benchmark::State& state) {
  const TensorDataset data = small_dataset(16);
  TrainConfig cfg;
  Generator g(cfg.generator, 1);
  Discriminator d(cfg.discriminator, 2);
  int epoch = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_epoch(g, d, data, cfg, epoch++));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
