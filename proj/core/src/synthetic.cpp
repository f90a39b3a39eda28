#include "xbf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "xbf/rng.hpp"

namespace xbf {

void SyntheticConfig::validate() const {
  if (n == 0 || num_labels == 0 || num_topics == 0) throw ConfigError("synthetic sizes must be positive");
  if (num_topics > num_labels) throw ConfigError("more topics than labels");
  if (active_topic_features > topic_features) throw ConfigError("active topic features exceed the topic's features");
  if (active_noise_features > noise_features) throw ConfigError("active noise features exceed the noise features");
  if (!(mean_labels >= 1.0)) throw ConfigError("mean label count must be at least 1");
  if (!(signature_keep >= 0.0 && signature_keep <= 1.0)) throw ConfigError("signature_keep must lie in [0, 1]");
  if (!(signature_noise >= 0.0 && signature_noise <= 1.0)) throw ConfigError("signature_noise must lie in [0, 1]");
  if (!(label_zipf >= 0.0)) throw ConfigError("label_zipf must be nonnegative");
}

namespace {

std::size_t poisson(double mean, Rng& rng) {
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double prod = rng.uniform_open();
  while (prod > limit) {
    ++k;
    prod *= rng.uniform_open();
  }
  return k;
}

// k distinct indices from [0, n) in random order.
std::vector<std::size_t> pick(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  return all;
}

}  // namespace

Dataset make_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t label_base = cfg.num_topics * cfg.topic_features;
  const std::size_t noise_base = label_base + cfg.num_labels * cfg.label_features;
  std::vector<std::vector<LabelId>> topic_labels(cfg.num_topics);
  std::vector<std::vector<double>> topic_weights(cfg.num_topics);
  for (std::size_t y = 0; y < cfg.num_labels; ++y) {
    const std::size_t t = y % cfg.num_topics;
    const double rank = static_cast<double>(y / cfg.num_topics);
    topic_labels[t].push_back(static_cast<LabelId>(y));
    topic_weights[t].push_back(std::pow(rank + 1.0, -cfg.label_zipf));
  }

  Rng rng(derive_seed(cfg.seed, 0x73796e74ULL));
  std::vector<SparseInstance> out;
  out.reserve(cfg.n);
  std::vector<double> weights;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SparseInstance inst;
    inst.id = i;
    const std::size_t t = static_cast<std::size_t>(rng.below(cfg.num_topics));
    const auto& labels = topic_labels[t];
    const std::size_t count = std::min(labels.size(), 1 + poisson(cfg.mean_labels - 1.0, rng));
    weights = topic_weights[t];
    for (std::size_t c = 0; c < count; ++c) {
      double total = 0.0;
      for (const double w : weights) total += w;
      double u = rng.uniform() * total;
      std::size_t pickd = weights.size() - 1;
      for (std::size_t a = 0; a < weights.size(); ++a) {
        if (weights[a] <= 0.0) continue;
        pickd = a;
        if (u < weights[a]) break;
        u -= weights[a];
      }
      inst.labels.push_back(labels[pickd]);
      weights[pickd] = 0.0;
    }
    std::sort(inst.labels.begin(), inst.labels.end());

    std::vector<Feature> feats;
    for (const auto f : pick(cfg.topic_features, cfg.active_topic_features, rng)) {
      feats.push_back({static_cast<FeatureId>(t * cfg.topic_features + f), 0.5 + rng.uniform()});
    }
    for (const auto y : inst.labels) {
      for (std::size_t s = 0; s < cfg.label_features; ++s) {
        if (rng.uniform() < cfg.signature_keep) {
          feats.push_back({static_cast<FeatureId>(label_base + y * cfg.label_features + s), 0.5 + rng.uniform()});
        }
      }
    }
    if (cfg.signature_noise > 0.0) {
      for (const auto y : labels) {
        if (std::binary_search(inst.labels.begin(), inst.labels.end(), y)) continue;
        for (std::size_t s = 0; s < cfg.label_features; ++s) {
          if (rng.uniform() < cfg.signature_noise) {
            feats.push_back({static_cast<FeatureId>(label_base + y * cfg.label_features + s), 0.5 + rng.uniform()});
          }
        }
      }
    }
    for (const auto f : pick(cfg.noise_features, cfg.active_noise_features, rng)) {
      feats.push_back({static_cast<FeatureId>(noise_base + f), 0.5 + rng.uniform()});
    }
    std::sort(feats.begin(), feats.end(), [](const Feature& a, const Feature& b) { return a.index < b.index; });
    double norm = 0.0;
    for (const auto& f : feats) norm += f.value * f.value;
    norm = std::sqrt(norm);
    for (auto& f : feats) f.value /= norm;
    inst.features = std::move(feats);
    out.push_back(std::move(inst));
  }
  return Dataset(std::move(out), cfg.num_features(), cfg.num_labels);
}

}  // namespace xbf
