#include <benchmark/benchmark.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "xbf/policy.hpp"
#include "xbf/rng.hpp"

namespace {

constexpr std::size_t kLabels = 100000;
constexpr std::size_t kFeatures = 64;

const xbf::PolicyModel& model() {
  static const xbf::PolicyModel m = [] {
    xbf::PolicyModel out(kLabels, kFeatures);
    xbf::Rng rng(1);
    for (xbf::LabelId y = 0; y < kLabels; ++y) {
      for (xbf::FeatureId f = 0; f < kFeatures; f += 7) out.weight(y, f) = rng.uniform() - 0.5;
    }
    return out;
  }();
  return m;
}

xbf::SparseInstance instance() {
  xbf::SparseInstance x;
  for (xbf::FeatureId f = 0; f < kFeatures; f += 8) x.features.push_back({f, 0.35});
  return x;
}

std::vector<xbf::LabelId> selector(std::size_t p) {
  std::vector<xbf::LabelId> all(kLabels);
  std::iota(all.begin(), all.end(), 0);
  xbf::Rng rng(p);
  for (std::size_t k = 0; k < p; ++k) std::swap(all[k], all[k + rng.below(kLabels - k)]);
  all.resize(p);
  std::sort(all.begin(), all.end());
  return all;
}

// Restricted scoring, softmax and a 5-slate draw; cost should grow with p only.
void BM_SelectorScoreAndSample(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto allowed = selector(p);
  const auto x = instance();
  xbf::Rng rng(2);
  for (auto _ : state) {
    const auto probs = xbf::restricted_softmax(xbf::logits(model(), x, allowed));
    benchmark::DoNotOptimize(xbf::sample_slate(allowed, probs, 5, rng));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectorScoreAndSample)->RangeMultiplier(10)->Range(10, 100000)->Complexity(benchmark::oN);

void BM_TopK(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto allowed = selector(p);
  const auto x = instance();
  for (auto _ : state) benchmark::DoNotOptimize(xbf::top_k(model(), x, allowed, 5));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TopK)->RangeMultiplier(10)->Range(10, 100000)->Complexity(benchmark::oN);

}  // namespace
