#include "xbf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "xbf/op_counter.hpp"

namespace xbf {

PolicyModel::PolicyModel(std::size_t num_labels, std::size_t num_features)
    : num_labels_(num_labels),
      num_features_(num_features),
      weights_(num_labels * num_features, 0.0),
      bias_(num_labels, 0.0) {}

double PolicyModel::score(LabelId y, std::span<const Feature> x) const {
  const double* w = weights_.data() + static_cast<std::size_t>(y) * num_features_;
  double s = bias_[y];
  for (const auto& f : x) s += w[f.index] * f.value;
  return s;
}

std::size_t PolicyModel::nonzeros() const {
  return static_cast<std::size_t>(std::count_if(weights_.begin(), weights_.end(), [](double v) { return v != 0.0; }));
}

ActionSelector ActionSelector::full(std::size_t num_labels) {
  ActionSelector s;
  s.kind_ = Kind::kFull;
  s.num_labels_ = num_labels;
  s.all_.resize(num_labels);
  std::iota(s.all_.begin(), s.all_.end(), LabelId{0});
  return s;
}

ActionSelector ActionSelector::from_sets(std::vector<std::vector<LabelId>> sets, std::size_t num_labels, Kind kind) {
  if (kind == Kind::kFull) throw ConfigError("from_sets cannot build a full selector");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto& set = sets[i];
    std::sort(set.begin(), set.end());
    if (std::adjacent_find(set.begin(), set.end()) != set.end()) {
      throw ConfigError(fmt::format("action selector: duplicate label for instance {}", i));
    }
    if (!set.empty() && set.back() >= num_labels) {
      throw ConfigError(fmt::format("action selector: label {} >= L={} for instance {}", set.back(), num_labels, i));
    }
  }
  ActionSelector s;
  s.kind_ = kind;
  s.num_labels_ = num_labels;
  s.sets_ = std::move(sets);
  return s;
}

std::span<const LabelId> ActionSelector::allowed(std::size_t instance) const {
  if (kind_ == Kind::kFull) return all_;
  if (instance >= sets_.size()) {
    throw std::out_of_range(fmt::format("action selector has no entry for instance {}", instance));
  }
  return sets_[instance];
}

bool ActionSelector::contains(std::size_t instance, LabelId y) const {
  if (kind_ == Kind::kFull) return y < num_labels_;
  const auto a = allowed(instance);
  return std::binary_search(a.begin(), a.end(), y);
}

std::vector<double> logits(const PolicyModel& model, const SparseInstance& x, std::span<const LabelId> allowed) {
  if (allowed.empty()) throw ConfigError(fmt::format("instance {}: empty allowed action set", x.id));
  std::vector<double> out(allowed.size());
  const auto bias = model.bias();
  const std::size_t nnz = x.features.size();
  for (std::size_t k = 0; k < allowed.size(); ++k) {
    const auto w = model.row(allowed[k]);
    double s = bias[allowed[k]];
    for (const auto& f : x.features) s += w[f.index] * f.value;
    out[k] = s;
  }
  count_multiply_adds(static_cast<std::uint64_t>(allowed.size()) * nnz);
  return out;
}

std::vector<double> restricted_softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  if (z.empty()) return p;
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (!std::isfinite(v)) throw ConfigError("restricted_softmax: non-finite logit");
    m = std::max(m, v);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  count_exponentials(z.size());
  return p;
}

double slate_conditional(std::span<const double> probs, std::span<const std::size_t> prefix, std::size_t candidate) {
  if (candidate >= probs.size()) throw std::out_of_range("slate_conditional: candidate out of range");
  auto in_prefix = [&](std::size_t i) { return std::find(prefix.begin(), prefix.end(), i) != prefix.end(); };
  if (in_prefix(candidate)) throw std::invalid_argument("slate_conditional: candidate already in prefix");
  double remaining = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!in_prefix(i)) remaining += probs[i];
  }
  if (!(remaining > 0.0)) {
    throw std::domain_error("slate_conditional: remaining probability mass exhausted (slate too long for the support)");
  }
  return probs[candidate] / remaining;
}

Slate sample_slate(std::span<const LabelId> actions, std::span<const double> probs, std::size_t ell, Rng& rng) {
  if (actions.size() != probs.size()) throw std::invalid_argument("sample_slate: actions/probs size mismatch");
  if (ell > actions.size()) {
    throw ConfigError(fmt::format("sample_slate: slate size {} exceeds {} allowed actions", ell, actions.size()));
  }
  Slate slate;
  slate.actions.reserve(ell);
  slate.propensities.reserve(ell);
  std::vector<char> taken(probs.size(), 0);
  std::vector<std::size_t> prefix;
  prefix.reserve(ell);
  for (std::size_t j = 0; j < ell; ++j) {
    double remaining = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!taken[i]) remaining += probs[i];
    }
    if (!(remaining > 0.0)) throw std::domain_error("sample_slate: remaining probability mass exhausted");
    const double u = rng.uniform() * remaining;
    std::size_t pick = probs.size();
    std::size_t last_positive = probs.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (taken[i] || probs[i] <= 0.0) continue;
      last_positive = i;
      acc += probs[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    if (pick == probs.size()) pick = last_positive;
    count_sampling_steps(probs.size());
    const double cond = slate_conditional(probs, prefix, pick);
    slate.actions.push_back(actions[pick]);
    slate.propensities.push_back(std::max(cond, kPropensityFloor));
    taken[pick] = 1;
    prefix.push_back(pick);
  }
  return slate;
}

Slate sample_slate(const PolicyModel& model, const SparseInstance& x, std::span<const LabelId> allowed,
                   std::size_t ell, Rng& rng) {
  if (ell > allowed.size()) {
    throw ConfigError(fmt::format("sample_slate: slate size {} exceeds {} allowed actions", ell, allowed.size()));
  }
  const auto probs = restricted_softmax(logits(model, x, allowed));
  return sample_slate(allowed, probs, ell, rng);
}

std::vector<LabelId> top_k_of_scores(std::span<const LabelId> labels, std::span<const double> scores, std::size_t k) {
  if (k > labels.size()) {
    throw ConfigError(fmt::format("top_k: k={} exceeds {} allowed actions", k, labels.size()));
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return labels[a] < labels[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<LabelId> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = labels[order[i]];
  return out;
}

std::vector<LabelId> top_k(const PolicyModel& model, const SparseInstance& x, std::span<const LabelId> allowed,
                           std::size_t k) {
  if (k > allowed.size()) {
    throw ConfigError(fmt::format("top_k: k={} exceeds {} allowed actions", k, allowed.size()));
  }
  const auto z = logits(model, x, allowed);
  return top_k_of_scores(allowed, z, k);
}

LogitGradient grad_log_restricted_prob(const PolicyModel& model, const SparseInstance& x,
                                       std::span<const LabelId> allowed, std::span<const LabelId> slate,
                                       std::size_t position) {
  if (position >= slate.size()) throw std::out_of_range("grad_log_restricted_prob: position out of range");
  auto locate = [&](LabelId y) -> std::ptrdiff_t {
    const auto it = std::lower_bound(allowed.begin(), allowed.end(), y);
    return (it != allowed.end() && *it == y) ? it - allowed.begin() : -1;
  };
  const auto target = locate(slate[position]);
  if (target < 0) {
    throw std::invalid_argument(fmt::format("grad_log_restricted_prob: label {} not in the allowed set",
                                            slate[position]));
  }

  const auto z = logits(model, x, allowed);
  std::vector<char> removed(allowed.size(), 0);
  for (std::size_t k = 0; k < position; ++k) {
    const auto p = locate(slate[k]);
    if (p >= 0) removed[static_cast<std::size_t>(p)] = 1;
  }

  LogitGradient g;
  g.labels.assign(allowed.begin(), allowed.end());
  g.values.assign(allowed.size(), 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (!removed[k]) m = std::max(m, z[k]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (removed[k]) continue;
    g.values[k] = std::exp(z[k] - m);
    sum += g.values[k];
  }
  for (std::size_t k = 0; k < z.size(); ++k) g.values[k] = -g.values[k] / sum;
  g.values[static_cast<std::size_t>(target)] += 1.0;
  return g;
}

void apply_gradient(PolicyModel& model, const SparseInstance& x, const LogitGradient& gradient, double scale) {
  auto bias = model.bias();
  for (std::size_t k = 0; k < gradient.labels.size(); ++k) {
    const double c = scale * gradient.values[k];
    if (c == 0.0) continue;
    const LabelId y = gradient.labels[k];
    auto w = model.row(y);
    for (const auto& f : x.features) w[f.index] += c * f.value;
    bias[y] += c;
  }
}

std::vector<double> ModelPolicy::restricted_probs(std::size_t instance, std::span<const LabelId> allowed) const {
  return restricted_softmax(logits(*model_, (*ds_)[instance], allowed));
}

}  // namespace xbf
