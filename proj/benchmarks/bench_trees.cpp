#include <benchmark/benchmark.h>

#include "poimatch/random.hpp"
#include "poimatch/trees.hpp"

namespace {

using namespace poimatch;

std::vector<LabeledPair> rows(std::size_t n) {
  Rng rng(5);
  std::vector<LabeledPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledPair lp;
    lp.label = rng.bernoulli(0.25) ? kMatched : kUnmatched;
    const double lev = lp.label ? rng.uniform(0.0, 0.35) : rng.uniform(0.15, 0.4);
    lp.pair.restaurant_id = "R" + std::to_string(i);
    lp.pair.poi_id = "P" + std::to_string(i);
    lp.pair.features = {rng.uniform(0, lp.label ? 300 : 1200), lev, lev * rng.uniform(0.6, 1.0), rng.uniform01(),
                        false};
    out.push_back(std::move(lp));
  }
  return out;
}

void BM_Train(benchmark::State& state) {
  const auto data = rows(1200);
  const auto kind = kAllModelKinds[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(to_string(kind)));
  for (auto _ : state) benchmark::DoNotOptimize(train_model(data, default_params(kind, 1)));
}
BENCHMARK(BM_Train)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_PredictForest(benchmark::State& state) {
  const auto data = rows(1200);
  const TreeModel model = train_model(data, default_params(ModelKind::kForest, 1));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict(model, data[i].pair.features));
    i = (i + 1) % data.size();
  }
}
BENCHMARK(BM_PredictForest);

}  // namespace

BENCHMARK_MAIN();
