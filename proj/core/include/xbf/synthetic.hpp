#pragma once

#include <cstddef>
#include <cstdint>

#include "xbf/xmc_data.hpp"

namespace xbf {

/// Topic-structured extreme multi-label data. Label y belongs to topic
/// y % num_topics and has within-topic popularity (rank + 1)^-label_zipf,
/// rank = y / num_topics. An instance picks one topic, draws its labels from
/// that topic by popularity, and emits some topic features, each label's
/// signature features with probability signature_keep, the signature features
/// of the topic's other labels with probability signature_noise, and noise
/// features.
/// Feature values are positive and each instance is L2-normalized.
struct SyntheticConfig {
  std::size_t n = 5000;
  std::size_t num_labels = 1000;
  std::size_t num_topics = 50;
  std::size_t topic_features = 10;
  std::size_t label_features = 2;
  std::size_t noise_features = 200;
  std::size_t active_topic_features = 4;
  std::size_t active_noise_features = 4;
  double label_zipf = 1.0;
  double mean_labels = 3.0;  ///< 1 + Poisson(mean_labels - 1), capped at the topic size
  double signature_keep = 0.6;
  double signature_noise = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t num_features() const {
    return num_topics * topic_features + num_labels * label_features + noise_features;
  }
  /// Throws ConfigError on zero sizes or out-of-range rates.
  void validate() const;
};

Dataset make_synthetic(const SyntheticConfig& cfg);

}  // namespace xbf
