#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "xbf/policy.hpp"
#include "xbf/types.hpp"

namespace xbf {
namespace {

double manual_score(const PolicyModel& m, LabelId y, const SparseInstance& x) {
  double s = m.bias()[y];
  for (const auto& f : x.features) s += m.weight(y, f.index) * f.value;
  return s;
}

// log pi^Phi(slate[pos] | x, earlier slate entries) from first principles.
double log_restricted_prob(const PolicyModel& m, const SparseInstance& x, std::span<const LabelId> allowed,
                           std::span<const LabelId> slate, std::size_t pos) {
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<LabelId> remaining;
  for (const auto y : allowed) {
    bool used = false;
    for (std::size_t j = 0; j < pos; ++j) used = used || slate[j] == y;
    if (!used) remaining.push_back(y);
  }
  for (const auto y : remaining) mx = std::max(mx, manual_score(m, y, x));
  double z = 0.0;
  for (const auto y : remaining) z += std::exp(manual_score(m, y, x) - mx);
  return manual_score(m, slate[pos], x) - mx - std::log(z);
}

TEST(Policy, LogitsAreSparseDotProducts) {
  Rng rng(1);
  const Dataset ds = testing::random_dataset(rng, 5, 12, 9, 4, 2);
  const PolicyModel m = testing::random_model(rng, 9, 12, 1.0);
  const std::vector<LabelId> allowed{1, 4, 8};
  for (const auto& x : ds.instances()) {
    const auto z = logits(m, x, allowed);
    ASSERT_EQ(z.size(), 3U);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(z[k], manual_score(m, allowed[k], x), 1e-14);
  }
  EXPECT_THROW((void)logits(m, ds[0], {}), ConfigError);
}

TEST(Policy, RestrictedSoftmax) {
  const std::vector<double> z{1.0, 2.0, 3.0};
  const auto p = restricted_softmax(z);
  const double e = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / e, 1e-15);
  EXPECT_NEAR(p[2], std::exp(3.0) / e, 1e-15);
  const auto shifted = restricted_softmax(std::vector<double>{1001.0, 1002.0, 1003.0});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(shifted[k], p[k], 1e-14);
  EXPECT_DOUBLE_EQ(restricted_softmax(std::vector<double>{-5.0})[0], 1.0);
  EXPECT_THROW((void)restricted_softmax(std::vector<double>{0.0, std::nan("")}), ConfigError);
  EXPECT_THROW((void)restricted_softmax(std::vector<double>{std::numeric_limits<double>::infinity()}), ConfigError);
}

TEST(Policy, SlateConditional) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  EXPECT_DOUBLE_EQ(slate_conditional(p, {}, 1), 0.3);
  const std::vector<std::size_t> prefix{0};
  EXPECT_NEAR(slate_conditional(p, prefix, 1), 0.6, 1e-15);
  const std::vector<std::size_t> two{0, 1};
  EXPECT_NEAR(slate_conditional(p, two, 2), 1.0, 1e-15);
  EXPECT_THROW((void)slate_conditional(p, prefix, 0), std::invalid_argument);
  EXPECT_THROW((void)slate_conditional(p, {}, 3), std::out_of_range);
  const std::vector<double> degenerate{1.0, 0.0};
  const std::vector<std::size_t> first{0};
  EXPECT_THROW((void)slate_conditional(degenerate, first, 1), std::domain_error);
}

TEST(Policy, SampledSlatesAreDistinctAndCarryExactPropensities) {
  Rng rng(2);
  const std::vector<LabelId> actions{3, 5, 7, 9, 11};
  const std::vector<double> probs{0.1, 0.2, 0.3, 0.25, 0.15};
  for (int t = 0; t < 200; ++t) {
    const Slate s = sample_slate(actions, probs, 3, rng);
    ASSERT_EQ(s.actions.size(), 3U);
    std::vector<std::size_t> prefix;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto pos = static_cast<std::size_t>(std::find(actions.begin(), actions.end(), s.actions[j]) -
                                                actions.begin());
      ASSERT_LT(pos, actions.size());
      for (const auto q : prefix) ASSERT_NE(q, pos);
      EXPECT_DOUBLE_EQ(s.propensities[j], slate_conditional(probs, prefix, pos));
      prefix.push_back(pos);
    }
  }
  EXPECT_THROW((void)sample_slate(actions, probs, 6, rng), ConfigError);
}

TEST(Policy, SampleSlateIsSeedDeterministic) {
  const std::vector<LabelId> actions{0, 1, 2, 3};
  const std::vector<double> probs{0.4, 0.3, 0.2, 0.1};
  Rng a(77);
  Rng b(77);
  for (int t = 0; t < 50; ++t) {
    const auto sa = sample_slate(actions, probs, 2, a);
    const auto sb = sample_slate(actions, probs, 2, b);
    EXPECT_EQ(sa.actions, sb.actions);
    EXPECT_EQ(sa.propensities, sb.propensities);
  }
}

TEST(Policy, FirstPositionFrequenciesMatchMarginals) {
  Rng rng(3);
  const std::vector<LabelId> actions{0, 1, 2};
  const std::vector<double> probs{0.6, 0.3, 0.1};
  std::map<LabelId, int> counts;
  const int n = 60000;
  for (int t = 0; t < n; ++t) ++counts[sample_slate(actions, probs, 1, rng).actions[0]];
  for (LabelId y = 0; y < 3; ++y) EXPECT_NEAR(counts[y] / static_cast<double>(n), probs[y], 0.01);
}

TEST(Policy, TopKBreaksTiesByLabel) {
  const std::vector<LabelId> labels{4, 2, 9, 7};
  const std::vector<double> scores{1.0, 3.0, 1.0, 3.0};
  EXPECT_EQ(top_k_of_scores(labels, scores, 3), (std::vector<LabelId>{2, 7, 4}));
  EXPECT_THROW((void)top_k_of_scores(labels, scores, 5), ConfigError);
}

TEST(Policy, TopKOfModelMatchesScores) {
  Rng rng(4);
  const Dataset ds = testing::random_dataset(rng, 3, 8, 10, 3, 2);
  const PolicyModel m = testing::random_model(rng, 10, 8, 1.0);
  std::vector<LabelId> all(10);
  std::iota(all.begin(), all.end(), LabelId{0});
  for (const auto& x : ds.instances()) {
    const auto top = top_k(m, x, all, 4);
    for (std::size_t k = 1; k < top.size(); ++k) {
      EXPECT_GE(manual_score(m, top[k - 1], x), manual_score(m, top[k], x));
    }
  }
}

TEST(Policy, GradLogRestrictedProbMatchesFiniteDifferences) {
  Rng rng(5);
  const Dataset ds = testing::random_dataset(rng, 4, 6, 8, 3, 2);
  PolicyModel m = testing::random_model(rng, 8, 6, 0.8);
  const std::vector<LabelId> allowed{0, 2, 3, 5, 6};
  const std::vector<LabelId> slate{3, 7, 0};  // 7 lies outside the allowed set and is skipped in the prefix
  for (const auto& x : ds.instances()) {
    for (std::size_t pos : {0U, 2U}) {
      const LogitGradient g = grad_log_restricted_prob(m, x, allowed, slate, pos);
      std::vector<double> analytic(8, 0.0);
      for (std::size_t k = 0; k < g.labels.size(); ++k) analytic[g.labels[k]] += g.values[k];
      const double h = 1e-6;
      for (LabelId y = 0; y < 8; ++y) {
        double& b = m.bias()[y];
        const double saved = b;
        b = saved + h;
        const double up = log_restricted_prob(m, x, allowed, slate, pos);
        b = saved - h;
        const double down = log_restricted_prob(m, x, allowed, slate, pos);
        b = saved;
        EXPECT_NEAR(analytic[y], (up - down) / (2 * h), 1e-8) << "label " << y << " pos " << pos;
      }
    }
  }
  const std::vector<LabelId> outside{7};
  EXPECT_THROW((void)grad_log_restricted_prob(m, ds[0], allowed, outside, 0), std::invalid_argument);
}

TEST(Policy, ApplyGradientIsAnOuterProduct) {
  PolicyModel m(3, 4);
  SparseInstance x;
  x.features = {{1, 2.0}, {3, -1.0}};
  LogitGradient g{{0, 2}, {0.5, -1.0}};
  apply_gradient(m, x, g, 2.0);
  EXPECT_DOUBLE_EQ(m.weight(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(m.weight(0, 3), -1.0);
  EXPECT_DOUBLE_EQ(m.weight(2, 1), -4.0);
  EXPECT_DOUBLE_EQ(m.weight(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.bias()[0], 1.0);
  EXPECT_DOUBLE_EQ(m.bias()[2], -2.0);
  EXPECT_EQ(m.nonzeros(), 4U);
}

TEST(Policy, CheckpointRoundTripIsBitExact) {
  Rng rng(6);
  PolicyModel m = testing::random_model(rng, 7, 5, 3.0);
  m.weight(1, 1) = 0.0;
  m.weight(2, 3) = 0.1;
  m.weight(3, 0) = std::numeric_limits<double>::denorm_min();
  m.bias()[4] = -0.0;
  std::stringstream buf;
  save_checkpoint(m, buf);
  const PolicyModel back = load_checkpoint(buf);
  EXPECT_EQ(back, m);
  std::stringstream again;
  save_checkpoint(back, again);
  std::stringstream first;
  save_checkpoint(m, first);
  EXPECT_EQ(first.str(), again.str());
}

TEST(Policy, CheckpointRejectsGarbage) {
  std::istringstream junk("hello\n");
  EXPECT_THROW((void)load_checkpoint(junk), ParseError);
  PolicyModel m(2, 2);
  std::stringstream buf;
  save_checkpoint(m, buf);
  std::string text = buf.str();
  text.resize(text.size() / 2);
  std::istringstream cut(text);
  EXPECT_THROW((void)load_checkpoint(cut), ParseError);
}

TEST(Policy, ActionSelector) {
  const auto full = ActionSelector::full(4);
  EXPECT_EQ(full.allowed(17).size(), 4U);
  EXPECT_TRUE(full.contains(3, 2));
  const auto sel = ActionSelector::from_sets({{3, 1}, {0}}, 4);
  EXPECT_EQ(std::vector<LabelId>(sel.allowed(0).begin(), sel.allowed(0).end()), (std::vector<LabelId>{1, 3}));
  EXPECT_TRUE(sel.contains(0, 3));
  EXPECT_FALSE(sel.contains(1, 3));
  EXPECT_THROW((void)sel.allowed(2), std::out_of_range);
  EXPECT_THROW((void)ActionSelector::from_sets({{1, 1}}, 4), ConfigError);
  EXPECT_THROW((void)ActionSelector::from_sets({{4}}, 4), ConfigError);
}

TEST(Policy, ModelPolicyIsTheRestrictedSoftmax) {
  Rng rng(7);
  const Dataset ds = testing::random_dataset(rng, 3, 5, 6, 2, 2);
  const PolicyModel m = testing::random_model(rng, 6, 5, 1.0);
  const ModelPolicy pi(m, ds);
  const std::vector<LabelId> allowed{0, 4, 5};
  const auto p = pi.restricted_probs(1, allowed);
  const auto q = restricted_softmax(logits(m, ds[1], allowed));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-15);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
}

}  // namespace
}  // namespace xbf
