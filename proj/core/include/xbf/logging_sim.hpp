#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xbf/policy.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf {

struct LoggingConfig {
  double alpha = 0.2;        ///< fraction of the training set used to fit the base policy
  double beta = 0.0;         ///< scale of the centered Gumbel perturbation (0 disables it)
  double temperature = 1.0;  ///< T in rho ~ exp(E / T)
  std::size_t top_m = 100;   ///< truncation of the logging support
  std::size_t ell = 5;       ///< slate size
  std::uint64_t seed = 0;

  /// Throws ConfigError when alpha is outside (0, 1], T <= 0, beta < 0 or top_m < ell.
  void validate() const;
};

/// Truncated logging distribution for one instance, ordered by descending
/// probability (ties by ascending label).
struct LoggingRow {
  std::vector<LabelId> actions;
  std::vector<double> probs;
  bool padded = false;  ///< support was completed with frequent labels

  friend bool operator==(const LoggingRow&, const LoggingRow&) = default;
};

/// The logging policy rho: one truncated categorical per dataset instance.
/// Labels absent from a row have probability exactly zero.
class LoggingTable {
 public:
  LoggingTable() = default;
  LoggingTable(std::vector<LoggingRow> rows, std::size_t num_labels);

  [[nodiscard]] std::size_t size() const { return rows_.size(); }
  [[nodiscard]] std::size_t num_labels() const { return num_labels_; }
  [[nodiscard]] const LoggingRow& row(std::size_t instance) const { return rows_.at(instance); }
  [[nodiscard]] std::span<const LoggingRow> rows() const { return rows_; }

  /// rho(y | x_instance); zero outside the truncated support.
  [[nodiscard]] double prob(std::size_t instance, LabelId y) const;
  [[nodiscard]] std::vector<std::size_t> padded_instances() const;

  friend bool operator==(const LoggingTable&, const LoggingTable&) = default;

 private:
  std::vector<LoggingRow> rows_;
  std::size_t num_labels_ = 0;
};

/// One logged interaction with a slate of ell actions.
struct BanditRecord {
  std::size_t instance_id = 0;            ///< index into the dataset the log was drawn from
  std::vector<LabelId> slate;
  std::vector<double> cond_propensities;  ///< rho(y_j | x, y_1..y_{j-1})
  std::vector<double> marg_propensities;  ///< rho(y_j | x)
  std::vector<double> rewards;            ///< 1 iff slate_j is in the instance's label set

  friend bool operator==(const BanditRecord&, const BanditRecord&) = default;
};

/// Supervised base policy: softmax regression against the uniform distribution
/// over each instance's label set, trained by per-instance SGD. Instances with
/// empty label sets are skipped. Zero epochs returns the zero model.
/// Throws DivergenceError (with the epoch) if the loss becomes non-finite.
PolicyModel fit_base_policy(const Dataset& train_fraction, std::size_t epochs, double lr, std::uint64_t seed = 0);

/// Builds rho per instance: keep the top_m labels of the base softmax
/// p(y|x) (labels with positive probability only), perturb the energy
/// E = log p + g with centered Gumbel noise g ~ beta * (G - gamma), and
/// renormalize exp(E / T) over the kept set. Instances left with fewer than
/// ell labels are padded with the most frequent labels (from
/// `padding_counts`, or `ds` when empty) at base probability 1e-6 and flagged.
LoggingTable build_logging_table(const PolicyModel& base, const Dataset& ds, const LoggingConfig& cfg,
                                 std::span<const std::size_t> padding_counts = {});

/// Supervised-to-bandit conversion: one slate of cfg.ell actions per instance,
/// drawn without replacement from rho with generator
/// Rng(derive_seed(cfg.seed, instance_id)); reward_j = [slate_j in Y*].
std::vector<BanditRecord> generate_bandit_log(const LoggingTable& table, const Dataset& ds, const LoggingConfig& cfg);

struct LoggingStats {
  std::size_t ell = 0;
  /// Mean per-slot reward of the logged slates: a one-sample estimate of rho's R@ell.
  double expected_reward_at_ell = 0.0;
  /// coverage[k-1] = mean over labelled instances of |top-k(rho) & Y*| / |Y*|.
  std::vector<double> coverage;
  std::size_t labelled_instances = 0;
  std::vector<std::size_t> padded_instances;
};

LoggingStats logging_stats(std::span<const BanditRecord> log, const LoggingTable& table, const Dataset& ds);

/// Phi^p: the p most probable logged actions per instance (all of them when the
/// support is smaller), returned sorted by label.
ActionSelector top_p_selector(const LoggingTable& table, std::size_t p);

/// The logging table as a stochastic policy.
class TablePolicy final : public StochasticPolicy {
 public:
  explicit TablePolicy(const LoggingTable& table) : table_(&table) {}
  [[nodiscard]] std::size_t num_labels() const override { return table_->num_labels(); }
  [[nodiscard]] std::vector<double> restricted_probs(std::size_t instance,
                                                     std::span<const LabelId> allowed) const override;

 private:
  const LoggingTable* table_;
};

}  // namespace xbf
