#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "xbf/policy.hpp"
#include "xbf/rng.hpp"

namespace xbf::oracle {

inline constexpr std::size_t kMaxLabels = 12;
inline constexpr std::size_t kMaxContexts = 8;
inline constexpr std::size_t kMaxSlate = 3;
inline constexpr std::size_t kEnumerationBudget = 1'000'000;

/// An environment or policy breaks a modelling assumption. The message names
/// the offending context and action.
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RewardFamily {
  kBernoulli,      ///< r in {0, delta_max} with mean delta(x, y)
  kDeterministic,  ///< r = delta(x, y)
};

/// Row x holds a distribution over labels for context x.
using PolicyTable = std::vector<std::vector<double>>;
/// Row x holds a sorted label set for context x.
using SetTable = std::vector<std::vector<LabelId>>;

struct ToyEnvironment {
  std::vector<double> context_probs;
  std::size_t num_labels = 0;
  std::vector<std::vector<double>> delta;  ///< expected reward delta(x, y)
  RewardFamily family = RewardFamily::kBernoulli;
  SetTable psi;                            ///< oracle selector: delta = 0 outside psi(x)
  double delta_max = 1.0;
  double sigma_sq = 0.0;                   ///< inf over (x, y) of E[r^2 | x, y]

  [[nodiscard]] std::size_t num_contexts() const { return context_probs.size(); }
  /// Possible rewards for (x, y) with their probabilities.
  [[nodiscard]] std::vector<std::pair<double, double>> reward_outcomes(std::size_t x, LabelId y) const;
  [[nodiscard]] double second_moment(std::size_t x, LabelId y) const;

  /// Recomputes sigma_sq from the reward family.
  void finalize();
  /// Throws ConfigError on malformed shapes or caps exceeded, and
  /// AssumptionViolation when delta leaves [0, delta_max], delta > 0 outside
  /// psi, probabilities do not sum to one, or sigma_sq is inconsistent.
  void validate() const;
};

/// V(pi) for slates of size ell, computed by summing over full ordered slates
/// (`joint`) and by summing per-position expectations over prefixes (`per_position`).
struct ValueRoutes {
  double joint = 0.0;
  double per_position = 0.0;
};

ValueRoutes exact_value_routes(const PolicyTable& pi, const ToyEnvironment& env, std::size_t ell);
/// The joint route; throws std::logic_error if the routes differ by more than 1e-12.
double exact_value(const PolicyTable& pi, const ToyEnvironment& env, std::size_t ell);

enum class EstimatorKind {
  kIs,             ///< pi(y|x) / rho(y|x) * r
  kSis,            ///< 1{y in Phi(x)} pi(y|x) / rho(y|x) * r
  kSisRestricted,  ///< pi^Phi(y|x) / rho(y|x) * r with pi renormalized over Phi(x)
};

/// Exact single-sample moments of an estimator (ell = 1); bias, variance and
/// MSE refer to the average of n i.i.d. samples.
struct Moments {
  double value = 0.0;          ///< V(pi)
  double mean = 0.0;           ///< E[single-sample estimate]
  double second_moment = 0.0;  ///< E[single-sample estimate^2]
  double bias = 0.0;           ///< mean - V(pi)
  double variance = 0.0;       ///< single-sample variance / n
  double mse = 0.0;            ///< bias^2 + variance
  double mean_square = 0.0;    ///< E[(n-sample average)^2]
};

/// Throws AssumptionViolation unless rows sum to one, pi's mass on psi is
/// covered by rho, and phi lies inside supp rho.
Moments exact_estimator_moments(EstimatorKind kind, const PolicyTable& pi, const PolicyTable& rho,
                                const SetTable& phi, const ToyEnvironment& env, std::size_t n);

/// E_x pi(psi(x) & phi^0(x) | x).
double kappa(const PolicyTable& pi, const SetTable& psi, const SetTable& phi, const ToyEnvironment& env);

struct Theorem1Report {
  double value = 0.0;
  double kappa = 0.0;
  Moments is;
  Moments sis;
  double bias_bound = 0.0;   ///< delta_max * kappa
  double bias_slack = 0.0;   ///< bias_bound - |bias|
  double correction = 0.0;   ///< sigma^2 / n * E_x pi^2(A|x) / rho(A|x), A = phi^0 & supp rho
  double mse_bound = 0.0;    ///< MSE(IS) + 2 delta_max^2 kappa - correction
  double mse_slack = 0.0;    ///< mse_bound - MSE(sIS)
  double second_moment_slack = 0.0;  ///< E[IS_n^2] - E[sIS_n^2] - correction
  bool bias_bound_holds = false;
  bool mse_bound_holds = false;
  bool second_moment_holds = false;

  [[nodiscard]] bool holds() const { return bias_bound_holds && mse_bound_holds && second_moment_holds; }
};

/// Uses the indicator form of sIS. Bounds are checked with tolerance `tol`.
Theorem1Report check_theorem1(const PolicyTable& pi, const PolicyTable& rho, const SetTable& phi,
                              const ToyEnvironment& env, std::size_t n, double tol = 1e-10);

/// A complete enumerable problem: environment, target, logging policy and selector.
struct Trial {
  ToyEnvironment env;
  PolicyTable pi;
  PolicyTable rho;
  SetTable phi;
};

/// Random admissible trial with ell = 1 assumptions satisfied by construction.
Trial random_trial(Rng& rng);

std::string to_json(const Trial& trial);
/// Throws ParseError on malformed JSON and ConfigError on missing fields.
Trial trial_from_json(const std::string& text);
std::string to_json(const Theorem1Report& report);

/// Oracle policy table exposed to the estimators: dataset instance i is
/// context context_of[i].
class ContextTablePolicy final : public StochasticPolicy {
 public:
  ContextTablePolicy(PolicyTable table, std::vector<std::size_t> context_of, std::size_t num_labels)
      : table_(std::move(table)), context_of_(std::move(context_of)), num_labels_(num_labels) {}
  [[nodiscard]] std::size_t num_labels() const override { return num_labels_; }
  [[nodiscard]] std::vector<double> restricted_probs(std::size_t instance,
                                                     std::span<const LabelId> allowed) const override;

 private:
  PolicyTable table_;
  std::vector<std::size_t> context_of_;
  std::size_t num_labels_;
};

}  // namespace xbf::oracle
