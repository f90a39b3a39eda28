#pragma once

#include <cstddef>
#include <cstdint>

namespace xbf::acceptance {

/// One end-to-end run on synthetic data: 5000 training and 1000 test
/// instances, a base policy fit on the alpha = 0.2 split, a simulated log,
/// and every learner evaluated on the test set.
struct PipelineConfig {
  std::uint64_t seed = 1;
  double beta = 0.0;
  double temperature = 2.0;
  /// Exposure bias of the logging policy: eta * log(N_y + 1) is added to the
  /// base policy's label biases, concentrating logged slates on head labels.
  double exposure_bias = 0.0;
  /// Drop each true label y with probability 1 - p_y before anything else, so
  /// the observed labels follow the propensity model's missingness.
  bool thin_labels = false;
  bool run_banditnet = true;
  bool run_direct = true;
  bool run_wpoxm = false;
};

/// Metrics are fractions in [0, 1].
struct PipelineResult {
  double logging_r5 = 0.0;
  double poxm_r5 = 0.0;
  double banditnet_r5 = 0.0;
  double direct_r5 = 0.0;
  std::size_t poxm_p = 0;
  double poxm_lambda = 0.0;
  double poxm_r3 = 0.0;
  double poxm_psr3 = 0.0;
  std::size_t wpoxm_p = 0;
  double wpoxm_lambda = 0.0;
  double wpoxm_r3 = 0.0;
  double wpoxm_psr3 = 0.0;
};

PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace xbf::acceptance
