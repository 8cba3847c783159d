#include <benchmark/benchmark.h>

#include <random>

#include "hcd/channels.hpp"
#include "hcd/filters.hpp"
#include "hcd/forest.hpp"
#include "hcd/pipeline_io.hpp"
#include "hcd/roi.hpp"

using namespace hcd;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (int c = 0; c < 3; ++c)
    for (auto& v : img.plane(c)) v = u(rng);
  return img;
}

void BM_HogLuv(benchmark::State& state) {
  const auto img = random_image(640, 480, 1);
  for (auto _ : state) benchmark::DoNotOptimize(compute_hogluv(img));
}
BENCHMARK(BM_HogLuv)->Unit(benchmark::kMillisecond);

void BM_Bank(benchmark::State& state, const char* bank_name) {
  const auto hog = compute_hogluv(random_image(640, 480, 2));
  const auto bank = bank_by_name(bank_name);
  for (auto _ : state) benchmark::DoNotOptimize(apply_bank(hog, bank));
}
BENCHMARK_CAPTURE(BM_Bank, cb11, "cb11")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Bank, rf9, "rf9")->Unit(benchmark::kMillisecond);

void BM_RoiPool(benchmark::State& state) {
  const auto stack = compute_channels(random_image(640, 480, 3), "rf9");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> x(0, 560), y(0, 300), h(40, 180);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < 100; ++i) {
    const double hh = h(rng);
    boxes.push_back({x(rng), y(rng), 0.41 * hh, hh});
  }
  const int side = static_cast<int>(state.range(0));
  for (auto _ : state)
    for (const auto& b : boxes) benchmark::DoNotOptimize(roi_pool(stack, b, side, side));
  state.SetItemsProcessed(state.iterations() * boxes.size());
}
BENCHMARK(BM_RoiPool)->Arg(7)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_Nms(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 600), ext(10, 150), sc(0, 1);
  std::vector<Proposal> ps;
  for (int i = 0; i < 2000; ++i) ps.push_back({{pos(rng), pos(rng), 0.41 * ext(rng), ext(rng)}, sc(rng), "img"});
  for (auto _ : state) benchmark::DoNotOptimize(nms(ps, 0.7));
}
BENCHMARK(BM_Nms)->Unit(benchmark::kMillisecond);

void BM_TrainRealBoost(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  SampleSet set(dim);
  std::vector<float> x(dim);
  for (int i = 0; i < 2000; ++i) {
    const int label = i % 4 == 0 ? 1 : -1;
    for (std::size_t d = 0; d < dim; ++d) x[d] = static_cast<float>(g(rng) + (d % 5 == 0 ? 0.5 * label : 0.0));
    set.add(x, label, 0.5);
  }
  TrainConfig cfg;
  cfg.feature_fraction = 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(train_realboost(set, 16, Forest{}, cfg));
}
BENCHMARK(BM_TrainRealBoost)->Arg(500)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
