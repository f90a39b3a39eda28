#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xbf/logging_sim.hpp"
#include "xbf/policy.hpp"

namespace xbf {

/// Read-only view of a bandit log, optionally reweighed by inverse label
/// propensities (wPOXM). A reweighed view divides the importance weight of
/// logged action y by p_y, so value numerators, the SNIS normalizer, the
/// translation term and ESS all use pi / (p_y * rho).
class LogView {
 public:
  LogView(std::span<const BanditRecord> records) : records_(records) {}  // NOLINT(google-explicit-constructor)
  LogView(const std::vector<BanditRecord>& records) : records_(records) {}  // NOLINT(google-explicit-constructor)
  LogView(std::span<const BanditRecord> records, std::vector<double> label_weights)
      : records_(records), label_weights_(std::move(label_weights)) {}

  [[nodiscard]] std::span<const BanditRecord> records() const { return records_; }
  [[nodiscard]] std::size_t size() const { return records_.size(); }
  [[nodiscard]] bool reweighed() const { return !label_weights_.empty(); }
  [[nodiscard]] std::span<const double> label_weights() const { return label_weights_; }
  /// 1 / p_y, or 1 when the view is not reweighed.
  [[nodiscard]] double inverse_weight(LabelId y) const { return reweighed() ? 1.0 / label_weights_[y] : 1.0; }

 private:
  std::span<const BanditRecord> records_;
  std::vector<double> label_weights_;
};

/// Attaches propensity weights p_y to a log. Throws ConfigError if a logged
/// label has no weight or a weight lies outside (0, 1].
LogView wpoxm_reweigh(std::span<const BanditRecord> log, std::span<const double> propensity_weights);

struct EstimatorConfig {
  /// Action selector Phi; null means the full label set (plain IS).
  const ActionSelector* selector = nullptr;
  /// Per-position translations lambda_j; empty means all zero. A single entry applies to every position.
  std::vector<double> lambdas;
  /// Clip importance weights at this value (diagnostic only).
  std::optional<double> weight_cap;
  /// When set, Phi(x) must lie inside the support of this logging table.
  const LoggingTable* logging_support = nullptr;

  [[nodiscard]] double lambda(std::size_t position) const;
};

/// Per (record, position) importance weights
///   w_ij = pi^Phi(y_ij | x_i, y_i,<j) / rho(y_ij | x_i, y_i,<j)
/// together with the rewards as reported by the view.
struct ImportanceWeights {
  std::size_t n = 0;
  std::size_t ell = 0;
  std::vector<double> weights;  ///< row-major n x ell
  std::vector<double> rewards;  ///< row-major n x ell
  std::size_t outside_selector = 0;  ///< logged actions with pi^Phi = 0 because they fall outside Phi
  std::size_t clipped = 0;

  [[nodiscard]] double weight(std::size_t i, std::size_t j) const { return weights[i * ell + j]; }
  [[nodiscard]] double reward(std::size_t i, std::size_t j) const { return rewards[i * ell + j]; }
};

/// Computes the weights. The prefix used in pi^Phi's conditional consists of
/// the earlier logged actions that lie inside Phi(x). Throws ConfigError on
/// non-positive logged propensities, ragged slates, or Phi outside supp(rho).
ImportanceWeights importance_weights(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg);

struct EstimatorReport {
  double value = 0.0;
  std::vector<double> per_position_values;
  double mean_weight = 0.0;                     ///< average over positions of the mean weight
  std::vector<double> per_position_mean_weight; ///< SNIS normalizers
  double ess = 0.0;                             ///< average over positions of (sum w)^2 / sum w^2
  std::size_t n_used = 0;
  std::size_t outside_selector = 0;
  std::size_t clipped = 0;
};

/// Slate IS with pruned weights: (1/n) sum_i sum_j w_ij r_ij over the full label set.
EstimatorReport is_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg = {});
/// Selective IS: as is_value with pi replaced by its restriction to cfg.selector.
EstimatorReport sis_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg);
/// Per-position self-normalized estimate sum_i w_ij r_ij / sum_i w_ij, summed over j.
/// Positions whose weights are all zero contribute zero; throws std::domain_error if all weights are zero.
EstimatorReport snis_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg);
/// Translated sIS objective (1/n) sum_i sum_j w_ij (r_ij - lambda_j).
/// With a null selector this is slate BanditNet; with Phi^p it is POXM's objective.
double banditnet_objective(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg);

/// Reductions over precomputed weights, shared by the estimators above.
EstimatorReport reduce_is(const ImportanceWeights& w, std::span<const double> lambdas = {});
EstimatorReport reduce_snis(const ImportanceWeights& w);

std::string to_json(const EstimatorReport& report);

}  // namespace xbf
