#include <benchmark/benchmark.h>

#include "poimatch/blocking.hpp"
#include "poimatch/geo.hpp"
#include "poimatch/synthgen.hpp"

namespace {

using namespace poimatch;

const synth::Dataset& dataset() {
  static const synth::Dataset d = synth::generate(synth::country_preset(Country::kID, 1));
  return d;
}

void BM_GeohashEncode(benchmark::State& state) {
  const geo::GeoPoint p{-8.5069, 115.2625};
  for (auto _ : state) benchmark::DoNotOptimize(geo::geohash_encode(p, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GeohashEncode)->Arg(6)->Arg(12);

void BM_BlockPairs(benchmark::State& state) {
  const auto& d = dataset();
  BlockingConfig cfg;
  cfg.neighbor_expansion = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(block_pairs(d.restaurants, d.pois, cfg));
}
BENCHMARK(BM_BlockPairs)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FeaturizeAndDownsample(benchmark::State& state) {
  const auto& d = dataset();
  BlockingConfig cfg;
  cfg.workers = static_cast<unsigned>(state.range(0));
  const auto blocked = block_pairs(d.restaurants, d.pois, cfg);
  for (auto _ : state) {
    auto pairs = blocked;
    featurize_all(pairs, d.restaurants, d.pois, cfg);
    benchmark::DoNotOptimize(downsample(std::move(pairs), cfg));
  }
}
BENCHMARK(BM_FeaturizeAndDownsample)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
