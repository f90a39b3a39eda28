#include "fixtures.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace xbf::testing {

const char* const kTinyDatasetText =
    "5 6 8\n"
    "0,2 0:1 3:0.5\n"
    "1 1:2\n"
    "2,5,7 0:0.25 2:1 5:1\n"
    " 4:1\n"
    "3 0:1 1:1 2:1\n";

Dataset tiny_dataset() {
  std::istringstream in(kTinyDatasetText);
  return parse_dataset(in);
}

namespace {

std::vector<std::uint32_t> distinct(Rng& rng, std::size_t universe, std::size_t count) {
  std::vector<std::uint32_t> all(universe);
  std::iota(all.begin(), all.end(), 0U);
  shuffle(std::span<std::uint32_t>(all), rng);
  all.resize(std::min(count, universe));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, std::size_t l, std::size_t nnz,
                       std::size_t max_labels) {
  std::vector<SparseInstance> instances(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& inst = instances[i];
    inst.id = i;
    for (const auto f : distinct(rng, d, nnz)) inst.features.push_back({f, 1.0 - rng.uniform()});
    inst.labels = distinct(rng, l, 1 + rng.below(max_labels));
  }
  return Dataset(std::move(instances), d, l);
}

PolicyModel random_model(Rng& rng, std::size_t l, std::size_t d, double scale) {
  PolicyModel m(l, d);
  for (LabelId y = 0; y < l; ++y) {
    for (FeatureId f = 0; f < d; ++f) m.weight(y, f) = scale * (2.0 * rng.uniform() - 1.0);
    m.bias()[y] = scale * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}

LoggedData simulate(const PolicyModel& base, const Dataset& ds, const LoggingConfig& cfg) {
  LoggedData out;
  out.table = build_logging_table(base, ds, cfg);
  out.log = generate_bandit_log(out.table, ds, cfg);
  return out;
}

ActionSelector random_selector(Rng& rng, std::size_t n, std::size_t l, std::size_t size) {
  std::vector<std::vector<LabelId>> sets(n);
  for (auto& s : sets) s = distinct(rng, l, size);
  return ActionSelector::from_sets(std::move(sets), l);
}

std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "xbf_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace xbf::testing
