#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "xbf/rng.hpp"
#include "xbf/types.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf {

/// Linear softmax policy: one dense weight row of length D per label plus a
/// per-label bias. Scoring an instance touches only its nonzero features.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(std::size_t num_labels, std::size_t num_features);

  [[nodiscard]] std::size_t num_labels() const { return num_labels_; }
  [[nodiscard]] std::size_t num_features() const { return num_features_; }

  [[nodiscard]] std::span<double> row(LabelId y) {
    return {weights_.data() + static_cast<std::size_t>(y) * num_features_, num_features_};
  }
  [[nodiscard]] std::span<const double> row(LabelId y) const {
    return {weights_.data() + static_cast<std::size_t>(y) * num_features_, num_features_};
  }
  [[nodiscard]] double& weight(LabelId y, FeatureId f) {
    return weights_[static_cast<std::size_t>(y) * num_features_ + f];
  }
  [[nodiscard]] double weight(LabelId y, FeatureId f) const {
    return weights_[static_cast<std::size_t>(y) * num_features_ + f];
  }
  [[nodiscard]] std::span<double> bias() { return bias_; }
  [[nodiscard]] std::span<const double> bias() const { return bias_; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }

  /// Logit of label y: <w_y, x> + b_y.
  [[nodiscard]] double score(LabelId y, std::span<const Feature> x) const;

  /// Parameters with nonzero weight (bias excluded).
  [[nodiscard]] std::size_t nonzeros() const;

  friend bool operator==(const PolicyModel&, const PolicyModel&) = default;

 private:
  std::size_t num_labels_ = 0;
  std::size_t num_features_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

/// Text checkpoint: a version line, "L D nnz", nnz "row col value" triplets,
/// then one "bias" line. Values are hexadecimal floats, so load(save(m)) == m bit for bit.
void save_checkpoint(const PolicyModel& model, std::ostream& out);
void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path);
PolicyModel load_checkpoint(std::istream& in);
PolicyModel load_checkpoint(const std::filesystem::path& path);

/// Per-instance set of allowed labels (the action selector Phi). Lists are
/// sorted ascending and duplicate-free.
class ActionSelector {
 public:
  enum class Kind { kFull, kExplicit, kTopPOfLogging };

  ActionSelector() = default;

  /// Every label is allowed for every instance.
  static ActionSelector full(std::size_t num_labels);
  /// Sorts each list; throws ConfigError on duplicates or labels >= num_labels.
  static ActionSelector from_sets(std::vector<std::vector<LabelId>> sets, std::size_t num_labels,
                                  Kind kind = Kind::kExplicit);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::size_t num_labels() const { return num_labels_; }
  /// Number of per-instance lists; 0 for the full selector.
  [[nodiscard]] std::size_t num_instances() const { return sets_.size(); }

  [[nodiscard]] std::span<const LabelId> allowed(std::size_t instance) const;
  [[nodiscard]] bool contains(std::size_t instance, LabelId y) const;

 private:
  Kind kind_ = Kind::kFull;
  std::size_t num_labels_ = 0;
  std::vector<std::vector<LabelId>> sets_;
  std::vector<LabelId> all_;
};

/// Conditional selection probabilities floor for logged propensities.
inline constexpr double kPropensityFloor = 1e-12;

/// One logit per allowed label. Cost is |allowed| * nnz(x); throws on an empty set.
std::vector<double> logits(const PolicyModel& model, const SparseInstance& x,
                           std::span<const LabelId> allowed);

/// Max-shifted softmax. Throws ConfigError on non-finite input.
std::vector<double> restricted_softmax(std::span<const double> logits);

/// Probability of drawing `candidate` next after `prefix` when sampling without
/// replacement from `probs` (positions index into `probs`):
///   probs[candidate] / (sum(probs) - sum(probs[prefix])).
/// The denominator is accumulated over the remaining positions. Throws
/// std::domain_error when the remaining mass is not positive.
double slate_conditional(std::span<const double> probs, std::span<const std::size_t> prefix,
                         std::size_t candidate);

struct Slate {
  std::vector<LabelId> actions;
  /// Entry j is the conditional probability of actions[j] given actions[0..j).
  std::vector<double> propensities;
};

/// Sequential renormalized categorical draws without replacement over
/// `actions` with marginals `probs`. Logged propensities are the exact
/// slate_conditional values, floored at kPropensityFloor.
Slate sample_slate(std::span<const LabelId> actions, std::span<const double> probs, std::size_t ell, Rng& rng);
Slate sample_slate(const PolicyModel& model, const SparseInstance& x, std::span<const LabelId> allowed,
                   std::size_t ell, Rng& rng);

/// k allowed labels with the highest logits, descending; ties by ascending label.
std::vector<LabelId> top_k(const PolicyModel& model, const SparseInstance& x, std::span<const LabelId> allowed,
                           std::size_t k);
/// Same ranking rule on precomputed scores aligned with `labels`.
std::vector<LabelId> top_k_of_scores(std::span<const LabelId> labels, std::span<const double> scores, std::size_t k);

/// Gradient of a scalar with respect to the logits of a set of labels. The
/// weight gradient is the outer product with the instance features:
///   dW[y, f] = values[y] * x_f,  db[y] = values[y].
struct LogitGradient {
  std::vector<LabelId> labels;
  std::vector<double> values;
};

/// Gradient of log pi^Phi(slate[position] | x, slate[0..position)).
/// With z the logits over Phi and R = Phi minus the in-Phi prefix, the
/// log-probability is z_y - logsumexp_R(z), so the gradient is
/// e_y - softmax_R(z). Rows outside R are zero.
LogitGradient grad_log_restricted_prob(const PolicyModel& model, const SparseInstance& x,
                                       std::span<const LabelId> allowed, std::span<const LabelId> slate,
                                       std::size_t position);

/// model += scale * outer(gradient, x).
void apply_gradient(PolicyModel& model, const SparseInstance& x, const LogitGradient& gradient, double scale);

/// Anything that can report its marginal action probabilities restricted to a
/// given allowed set for a dataset instance.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;
  [[nodiscard]] virtual std::size_t num_labels() const = 0;
  /// pi(y | x, y in allowed) for every y in `allowed`; sums to one unless the
  /// policy puts no mass on `allowed`, in which case all entries are zero.
  [[nodiscard]] virtual std::vector<double> restricted_probs(std::size_t instance,
                                                             std::span<const LabelId> allowed) const = 0;
};

/// Softmax of a PolicyModel on a dataset.
class ModelPolicy final : public StochasticPolicy {
 public:
  ModelPolicy(const PolicyModel& model, const Dataset& ds) : model_(&model), ds_(&ds) {}
  [[nodiscard]] std::size_t num_labels() const override { return model_->num_labels(); }
  [[nodiscard]] std::vector<double> restricted_probs(std::size_t instance,
                                                     std::span<const LabelId> allowed) const override;

 private:
  const PolicyModel* model_;
  const Dataset* ds_;
};

}  // namespace xbf
