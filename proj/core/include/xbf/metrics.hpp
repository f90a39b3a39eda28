#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xbf/logging_sim.hpp"
#include "xbf/policy.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf {

/// Empirical label propensities p_y = 1 / (1 + C (N_y + b)^-a),
/// C = (log n - 1)(b + 1)^a, clamped to (0, 1].
struct PropensityModel {
  double a = 0.55;
  double b = 1.5;
  std::vector<double> p;
};

/// Throws ConfigError when n == 0.
PropensityModel fit_propensities(std::span<const std::size_t> freqs, std::size_t n, double a = 0.55, double b = 1.5);

/// A policy ranks the actions for a test instance, either deterministically
/// (a top-k list) or by slates drawn without replacement from marginals.
class RankingPolicy {
 public:
  virtual ~RankingPolicy() = default;
  [[nodiscard]] virtual bool deterministic() const = 0;
  /// Candidate actions and marginal probabilities. Stochastic policies only.
  virtual void distribution(std::size_t instance, std::vector<LabelId>& actions, std::vector<double>& probs) const;
  /// The k highest-ranked actions. Deterministic policies only.
  [[nodiscard]] virtual std::vector<LabelId> ranking(std::size_t instance, std::size_t k) const;
};

/// Softmax of a linear model, optionally restricted to a selector.
class SoftmaxRanker final : public RankingPolicy {
 public:
  SoftmaxRanker(const PolicyModel& model, const Dataset& ds, const ActionSelector* selector = nullptr);
  [[nodiscard]] bool deterministic() const override { return false; }
  void distribution(std::size_t instance, std::vector<LabelId>& actions, std::vector<double>& probs) const override;

 private:
  const PolicyModel* model_;
  const Dataset* ds_;
  const ActionSelector* selector_;
  ActionSelector full_;
};

/// Greedy top-k of a linear model's scores, optionally restricted to a selector.
class TopKRanker final : public RankingPolicy {
 public:
  TopKRanker(const PolicyModel& model, const Dataset& ds, const ActionSelector* selector = nullptr);
  [[nodiscard]] bool deterministic() const override { return true; }
  [[nodiscard]] std::vector<LabelId> ranking(std::size_t instance, std::size_t k) const override;

 private:
  const PolicyModel* model_;
  const Dataset* ds_;
  const ActionSelector* selector_;
  ActionSelector full_;
};

/// The logging table itself as a stochastic ranker.
class TableRanker final : public RankingPolicy {
 public:
  explicit TableRanker(const LoggingTable& table) : table_(&table) {}
  [[nodiscard]] bool deterministic() const override { return false; }
  void distribution(std::size_t instance, std::vector<LabelId>& actions, std::vector<double>& probs) const override;

 private:
  const LoggingTable* table_;
};

struct EvalConfig {
  std::vector<std::size_t> ks{3, 5};
  std::size_t n_samples = 10;  ///< slates per instance for stochastic policies
  std::uint64_t seed = 0;
};

/// Values in [0, 1]. Instances with an empty label set are excluded from all
/// averages. Stochastic policies draw n_samples slates of size max(ks) per
/// instance from Rng(derive_seed(seed, instance)); every k reuses those slates.
struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> reward;  ///< R@k
  std::vector<double> ndcr;    ///< nDCR@k
  std::vector<double> psr;     ///< PSR@k; empty when no propensity model was given
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::size_t instances = 0;

  /// Metrics x100: R@k..., nDCR@k..., PSR@k..., tab separated.
  [[nodiscard]] std::string table_row() const;
  [[nodiscard]] std::string table_header() const;
  [[nodiscard]] std::string to_json() const;
};

/// Throws ConfigError if a k is zero, n_samples is zero, or a policy has fewer
/// than max(ks) candidate actions with positive probability.
MetricReport evaluate(const RankingPolicy& pi, const Dataset& test, const PropensityModel* prop,
                      const EvalConfig& cfg);

double reward_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, std::size_t n_samples,
                   std::uint64_t seed);
double ndcr_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, std::size_t n_samples,
                 std::uint64_t seed);
double psr_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, const PropensityModel& prop,
                std::size_t n_samples, std::uint64_t seed);

}  // namespace xbf
