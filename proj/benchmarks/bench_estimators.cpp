#include <benchmark/benchmark.h>

#include <vector>

#include "xbf/estimators.hpp"
#include "xbf/logging_sim.hpp"
#include "xbf/rng.hpp"

namespace {

struct Fixture {
  xbf::Dataset ds;
  xbf::PolicyModel base;
  xbf::LoggingTable table;
  std::vector<xbf::BanditRecord> log;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    constexpr std::size_t kN = 5000;
    constexpr std::size_t kL = 2000;
    constexpr std::size_t kD = 200;
    xbf::Rng rng(3);
    std::vector<xbf::SparseInstance> xs(kN);
    for (std::size_t i = 0; i < kN; ++i) {
      xs[i].id = i;
      for (xbf::FeatureId f = static_cast<xbf::FeatureId>(rng.below(20)); f < kD; f += 20 + rng.below(20)) {
        xs[i].features.push_back({f, 0.3});
      }
      xs[i].labels = {static_cast<xbf::LabelId>(rng.below(kL))};
    }
    Fixture out;
    out.ds = xbf::Dataset(std::move(xs), kD, kL);
    out.base = xbf::PolicyModel(kL, kD);
    for (xbf::LabelId y = 0; y < kL; ++y) out.base.bias()[y] = rng.uniform();
    xbf::LoggingConfig cfg;
    out.table = xbf::build_logging_table(out.base, out.ds, cfg);
    out.log = xbf::generate_bandit_log(out.table, out.ds, cfg);
    return out;
  }();
  return f;
}

void BM_SnisWithSelector(benchmark::State& state) {
  const auto& f = fixture();
  const auto sel = xbf::top_p_selector(f.table, static_cast<std::size_t>(state.range(0)));
  const xbf::ModelPolicy pi(f.base, f.ds);
  xbf::EstimatorConfig cfg;
  cfg.selector = &sel;
  for (auto _ : state) benchmark::DoNotOptimize(xbf::snis_value(f.log, pi, cfg).value);
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * f.log.size()));
}
BENCHMARK(BM_SnisWithSelector)->Arg(10)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_IsFullLabelSet(benchmark::State& state) {
  const auto& f = fixture();
  const xbf::ModelPolicy pi(f.base, f.ds);
  for (auto _ : state) benchmark::DoNotOptimize(xbf::is_value(f.log, pi, {}).value);
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * f.log.size()));
}
BENCHMARK(BM_IsFullLabelSet)->Unit(benchmark::kMillisecond);

}  // namespace
