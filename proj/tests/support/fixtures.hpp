#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xbf/logging_sim.hpp"
#include "xbf/policy.hpp"
#include "xbf/rng.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf::testing {

/// Five instances over D = 6 features and L = 8 labels; instance 3 has no labels.
extern const char* const kTinyDatasetText;
Dataset tiny_dataset();

/// Random sparse data: `nnz` distinct features per instance with values in
/// (0, 1], and 1 to `max_labels` distinct labels.
Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, std::size_t l, std::size_t nnz,
                       std::size_t max_labels);

/// Weights and biases uniform in [-scale, scale].
PolicyModel random_model(Rng& rng, std::size_t l, std::size_t d, double scale);

/// A logging table and log drawn from the softmax of `base`.
struct LoggedData {
  LoggingTable table;
  std::vector<BanditRecord> log;
};
LoggedData simulate(const PolicyModel& base, const Dataset& ds, const LoggingConfig& cfg);

/// Random per-instance subsets of [0, l) of the given size.
ActionSelector random_selector(Rng& rng, std::size_t n, std::size_t l, std::size_t size);

/// Fresh empty directory under the system temp path.
std::string scratch_dir(const std::string& name);

}  // namespace xbf::testing
