#include <gtest/gtest.h>

#include <cmath>

#include "xbf/synthetic.hpp"
#include "xbf/types.hpp"

namespace xbf {
namespace {

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticConfig cfg;
  cfg.n = 300;
  cfg.seed = 5;
  const Dataset a = make_synthetic(cfg);
  const Dataset b = make_synthetic(cfg);
  ASSERT_EQ(a.n(), b.n());
  for (std::size_t i = 0; i < a.n(); ++i) EXPECT_EQ(a[i], b[i]);
  cfg.seed = 6;
  const Dataset c = make_synthetic(cfg);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.n(); ++i) same += a[i] == c[i] ? 1 : 0;
  EXPECT_LT(same, 10U);
}

TEST(Synthetic, ShapeAndStructure) {
  SyntheticConfig cfg;
  cfg.n = 500;
  cfg.num_labels = 200;
  cfg.num_topics = 20;
  cfg.signature_keep = 1.0;
  const Dataset ds = make_synthetic(cfg);
  EXPECT_EQ(ds.n(), 500U);
  EXPECT_EQ(ds.d(), cfg.num_features());
  EXPECT_EQ(ds.l_total(), 200U);
  const std::size_t label_base = cfg.num_topics * cfg.topic_features;
  double total_labels = 0.0;
  for (const auto& x : ds.instances()) {
    ASSERT_FALSE(x.labels.empty());
    total_labels += static_cast<double>(x.labels.size());
    // One topic per instance.
    for (const auto y : x.labels) EXPECT_EQ(y % cfg.num_topics, x.labels.front() % cfg.num_topics);
    double norm = 0.0;
    std::size_t topic = 0;
    std::size_t signature = 0;
    for (const auto& f : x.features) {
      EXPECT_GT(f.value, 0.0);
      norm += f.value * f.value;
      if (f.index < label_base) {
        ++topic;
        EXPECT_EQ(f.index / cfg.topic_features, x.labels.front() % cfg.num_topics);
      } else if (f.index < label_base + cfg.num_labels * cfg.label_features) {
        ++signature;
        const auto y = static_cast<LabelId>((f.index - label_base) / cfg.label_features);
        EXPECT_TRUE(x.has_label(y));
      }
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_EQ(topic, cfg.active_topic_features);
    EXPECT_EQ(signature, x.labels.size() * cfg.label_features);
  }
  // 1 + Poisson(2), rarely capped by the topic size of 10.
  EXPECT_NEAR(total_labels / 500.0, 3.0, 0.25);
}

TEST(Synthetic, PopularityDecaysWithRank) {
  SyntheticConfig cfg;
  cfg.n = 4000;
  const auto freq = label_frequencies(make_synthetic(cfg));
  std::size_t head = 0;
  std::size_t tail = 0;
  for (std::size_t y = 0; y < cfg.num_topics; ++y) head += freq[y];
  for (std::size_t y = cfg.num_labels - cfg.num_topics; y < cfg.num_labels; ++y) tail += freq[y];
  EXPECT_GT(head, 10 * tail);
}

TEST(Synthetic, Validation) {
  SyntheticConfig cfg;
  cfg.n = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.num_topics = cfg.num_labels + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.signature_keep = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.mean_labels = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.active_noise_features = cfg.noise_features + 1;
  EXPECT_THROW(make_synthetic(cfg), ConfigError);
}

}  // namespace
}  // namespace xbf
