#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xbf/logging_sim.hpp"
#include "xbf/policy.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf {

enum class TrainMode { kPoxm, kBanditNet, kPmBanditNet, kDirect };

/// Accepts "poxm", "banditnet", "pm-banditnet", "direct"; throws ConfigError otherwise.
TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::kPoxm;
  std::vector<std::size_t> p_grid{10, 20, 50, 100};
  std::vector<double> lambda_grid{0.7, 0.8, 0.9, 1.0};
  std::size_t epochs = 10;
  double lr = 5.0;          ///< step size for the importance-sampling modes
  double direct_lr = 20.0;  ///< step size for the Direct Method
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Sampled negatives per record for full-softmax modes above the threshold.
  std::optional<std::size_t> negative_samples;
  std::size_t full_softmax_threshold = 30000;
  double momentum = 0.0;
  /// Fraction of log records held out for SNIS model selection; 0 selects on the training log.
  double holdout_fraction = 0.0;
  /// wPOXM: per-label propensity weights p_y; empty disables reweighing.
  /// Importance weights of logged action y are divided by p_y.
  std::vector<double> propensity_weights;

  /// Throws ConfigError on empty grids, lr <= 0, zero batch size or holdout outside [0, 1).
  void validate() const;
};

struct GridPoint {
  std::size_t p = 0;  ///< 0 when the mode has no action selector
  double lambda = 0.0;
  double snis = 0.0;
  double final_objective = 0.0;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct TrainResult {
  PolicyModel model;
  TrainMode mode = TrainMode::kPoxm;
  std::size_t chosen_p = 0;
  double chosen_lambda = 0.0;
  std::vector<GridPoint> snis_curve;    ///< in grid order: p ascending, then lambda ascending
  std::vector<double> training_trace;   ///< per epoch: sum of batch objectives (at pre-update weights) over n

  friend bool operator==(const TrainResult&, const TrainResult&) = default;
};

/// What one record contributes to the ascent objective.
struct ObjectiveSpec {
  const ActionSelector* selector = nullptr;       ///< Phi; null is the full label set
  const ActionSelector* feedback_mask = nullptr;  ///< partial matching: positions whose action is outside are ignored
  double lambda = 0.0;
  std::span<const double> label_weights;          ///< wPOXM p_y; empty disables
  std::size_t negative_samples = 0;               ///< 0 is the exact softmax; only valid with a null selector
};

struct RecordTerm {
  double objective = 0.0;
  LogitGradient gradient;
};

/// Per-record translated objective sum_j w_j (r_j - lambda) and its logit
/// gradient sum_j w_j (r_j - lambda) grad log pi^Phi(y_j | x, prefix).
/// With label weights w_j is divided by p_{y_j}.
/// With negative sampling the softmax denominator over the labels outside the
/// slate is estimated from K_eff = min(K, L - ell) uniformly drawn negatives
/// scaled by (L - ell) / K_eff; this is exact when K_eff = L - ell.
RecordTerm record_term(const PolicyModel& model, const SparseInstance& x, const BanditRecord& record,
                       const ObjectiveSpec& spec, Rng* negatives = nullptr);

/// Direct Method record term: Bernoulli log-likelihood of the observed rewards
/// under sigmoid(score), and its logit gradient r - sigmoid(score).
RecordTerm direct_record_term(const PolicyModel& model, const SparseInstance& x, const BanditRecord& record);

struct DenseGradient {
  std::vector<double> weights;  ///< row-major L x D
  std::vector<double> bias;
};

/// Sum over `records` of record_term (objective returned, gradient added to *out).
/// Negatives for record k are drawn from Rng(derive_seed(seed, k)).
double batch_objective_gradient(const PolicyModel& model, const Dataset& ds, std::span<const BanditRecord> records,
                                const ObjectiveSpec& spec, std::uint64_t seed, DenseGradient* out);

/// Mini-batch gradient ascent on the mean per-record objective. Gradients of a
/// batch are computed at fixed weights and applied in record order. Throws
/// DivergenceError carrying the epoch when a logit, the objective or an
/// update is not finite.
PolicyModel ascend(PolicyModel init, const Dataset& ds, std::span<const BanditRecord> log, const ObjectiveSpec& spec,
                   const TrainConfig& cfg, std::vector<double>* trace = nullptr);

/// `init` warm-starts every grid run; null starts from zeros.
TrainResult train_poxm(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable& table,
                       const TrainConfig& cfg, const PolicyModel* init = nullptr);
TrainResult train_banditnet(std::span<const BanditRecord> log, const Dataset& ds, const TrainConfig& cfg,
                            const PolicyModel* init = nullptr);
TrainResult train_pm_banditnet(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable& table,
                               const TrainConfig& cfg, const PolicyModel* init = nullptr);
TrainResult train_direct(std::span<const BanditRecord> log, const Dataset& ds, const TrainConfig& cfg,
                         const PolicyModel* init = nullptr);
/// Dispatches on cfg.mode; `table` is required for poxm and pm-banditnet.
TrainResult train(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable* table,
                  const TrainConfig& cfg, const PolicyModel* init = nullptr);

/// JSON sidecar: configuration, chosen hyperparameters, snis_curve and trace.
std::string train_result_json(const TrainResult& result, const TrainConfig& cfg);

}  // namespace xbf
