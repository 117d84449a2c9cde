#include <benchmark/benchmark.h>

#include "poimatch/text.hpp"

namespace {

using namespace poimatch;

void BM_LevenshteinNorm(benchmark::State& state) {
  const std::string a = "warung nasi ayam bu sri";
  const std::string b = "warung nasi ayam ibu sri - ubud";
  for (auto _ : state) benchmark::DoNotOptimize(text::levenshtein_norm(a, b));
}
BENCHMARK(BM_LevenshteinNorm);

void BM_JaroDistance(benchmark::State& state) {
  const std::string a = "kedai kopi kenangan";
  const std::string b = "kopi kenangan kedai";
  for (auto _ : state) benchmark::DoNotOptimize(text::jaro_distance(a, b));
}
BENCHMARK(BM_JaroDistance);

void BM_NormalizeText(benchmark::State& state) {
  const std::string s = "  Café Déjà-Vu, Jl. Raya  Ubud No.12 ";
  for (auto _ : state) benchmark::DoNotOptimize(text::normalize_text(s));
}
BENCHMARK(BM_NormalizeText);

}  // namespace
