#include <gtest/gtest.h>

#include <limits>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "xbf/estimators.hpp"
#include "xbf/parallel.hpp"
#include "xbf/trainer.hpp"
#include "xbf/types.hpp"

namespace xbf {
namespace {

EstimatorConfig on(const ActionSelector* selector) {
  EstimatorConfig cfg;
  cfg.selector = selector;
  return cfg;
}

struct World {
  Dataset ds;
  PolicyModel base;
  LoggingConfig cfg;
  testing::LoggedData data;
};

World make_world(std::uint64_t seed, std::size_t n = 40, std::size_t l = 10, std::size_t top_m = 6,
                 std::size_t ell = 3) {
  Rng rng(seed);
  World w;
  w.ds = testing::random_dataset(rng, n, 7, l, 3, 3);
  w.base = testing::random_model(rng, l, 7, 1.0);
  w.cfg.top_m = top_m;
  w.cfg.ell = ell;
  w.cfg.temperature = 1.5;
  w.cfg.seed = seed;
  w.data = testing::simulate(w.base, w.ds, w.cfg);
  return w;
}

TrainConfig small_config() {
  TrainConfig c;
  c.p_grid = {2, 4};
  c.lambda_grid = {0.0, 0.5};
  c.epochs = 3;
  c.lr = 0.5;
  c.direct_lr = 0.5;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

// Max relative deviation between the analytic gradient and central differences.
double gradient_error(PolicyModel model, const Dataset& ds, std::span<const BanditRecord> log,
                      const ObjectiveSpec& spec) {
  DenseGradient g;
  (void)batch_objective_gradient(model, ds, log, spec, 0, &g);
  const double h = 1e-6;
  double num = 0.0;
  double den = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = batch_objective_gradient(model, ds, log, spec, 0, nullptr);
    param = saved - h;
    const double down = batch_objective_gradient(model, ds, log, spec, 0, nullptr);
    param = saved;
    const double fd = (up - down) / (2 * h);
    num = std::max(num, std::abs(fd - analytic));
    den = std::max(den, std::abs(fd));
  };
  for (LabelId y = 0; y < model.num_labels(); ++y) {
    for (FeatureId f = 0; f < model.num_features(); ++f) {
      probe(model.weight(y, f), g.weights[y * model.num_features() + f]);
    }
    probe(model.bias()[y], g.bias[y]);
  }
  return num / std::max(den, 1e-12);
}

TEST(Trainer, ObjectiveMatchesTheTranslatedEstimator) {
  const World w = make_world(1);
  Rng rng(2);
  const PolicyModel m = testing::random_model(rng, 10, 7, 0.5);
  const auto sel = top_p_selector(w.data.table, 4);
  const double n = static_cast<double>(w.data.log.size());
  for (const ActionSelector* s : {static_cast<const ActionSelector*>(nullptr), &sel}) {
    ObjectiveSpec spec;
    spec.selector = s;
    spec.lambda = 0.6;
    const double obj = batch_objective_gradient(m, w.ds, w.data.log, spec, 0, nullptr) / n;
    const double est = banditnet_objective(w.data.log, ModelPolicy(m, w.ds), {s, {0.6}, {}, nullptr});
    EXPECT_NEAR(obj, est, 1e-12);
  }
  std::vector<double> p(10);
  for (std::size_t y = 0; y < 10; ++y) p[y] = 0.2 + 0.08 * static_cast<double>(y);
  ObjectiveSpec weighted;
  weighted.selector = &sel;
  weighted.label_weights = p;
  const double obj = batch_objective_gradient(m, w.ds, w.data.log, weighted, 0, nullptr) / n;
  EXPECT_NEAR(obj, sis_value(wpoxm_reweigh(w.data.log, p), ModelPolicy(m, w.ds), on(&sel)).value, 1e-12);
}

TEST(Trainer, GradientMatchesFiniteDifferences) {
  const World w = make_world(3, 15);
  Rng rng(4);
  const PolicyModel m = testing::random_model(rng, 10, 7, 0.7);
  const auto sel = top_p_selector(w.data.table, 3);
  const auto mask = top_p_selector(w.data.table, 2);
  std::vector<double> p(10, 0.4);
  ObjectiveSpec specs[4];
  specs[0].lambda = 0.3;
  specs[1].selector = &sel;
  specs[1].lambda = 0.9;
  specs[2].feedback_mask = &mask;
  specs[2].lambda = 0.5;
  specs[3].selector = &sel;
  specs[3].label_weights = p;
  specs[3].lambda = 1.0;
  for (const auto& spec : specs) EXPECT_LT(gradient_error(m, w.ds, w.data.log, spec), 1e-6);
}

TEST(Trainer, ExhaustiveNegativeSamplingIsExact) {
  const World w = make_world(5, 20, 12, 6, 3);
  Rng rng(6);
  const PolicyModel m = testing::random_model(rng, 12, 7, 0.8);
  ObjectiveSpec exact;
  exact.lambda = 0.4;
  ObjectiveSpec sampled = exact;
  sampled.negative_samples = 11;  // L - 1 >= L - ell, every other label is drawn
  DenseGradient ge;
  DenseGradient gs;
  const double oe = batch_objective_gradient(m, w.ds, w.data.log, exact, 0, &ge);
  const double os = batch_objective_gradient(m, w.ds, w.data.log, sampled, 9, &gs);
  EXPECT_NEAR(oe, os, 1e-10);
  for (std::size_t k = 0; k < ge.weights.size(); ++k) EXPECT_NEAR(ge.weights[k], gs.weights[k], 1e-10);
  for (std::size_t k = 0; k < ge.bias.size(); ++k) EXPECT_NEAR(ge.bias[k], gs.bias[k], 1e-10);
  ObjectiveSpec bad = sampled;
  const auto sel = top_p_selector(w.data.table, 3);
  bad.selector = &sel;
  EXPECT_THROW((void)batch_objective_gradient(m, w.ds, w.data.log, bad, 0, nullptr), ConfigError);
}

TEST(Trainer, SampledNegativesGiveAFiniteGradient) {
  const World w = make_world(7, 20, 12, 6, 3);
  Rng rng(8);
  const PolicyModel m = testing::random_model(rng, 12, 7, 0.8);
  ObjectiveSpec sampled;
  sampled.negative_samples = 3;
  DenseGradient g;
  const double o = batch_objective_gradient(m, w.ds, w.data.log, sampled, 1, &g);
  EXPECT_TRUE(std::isfinite(o));
  EXPECT_EQ(o, batch_objective_gradient(m, w.ds, w.data.log, sampled, 1, nullptr));
}

TEST(Trainer, PartialMatchingWithFullSupportIsBanditNet) {
  const World w = make_world(9, 40, 8, 8, 3);  // rho supports every label
  auto cfg = small_config();
  cfg.p_grid = {8};
  const auto pm = train_pm_banditnet(w.data.log, w.ds, w.data.table, cfg);
  const auto bn = train_banditnet(w.data.log, w.ds, cfg);
  EXPECT_EQ(pm.model, bn.model);
  EXPECT_EQ(pm.chosen_lambda, bn.chosen_lambda);
  ASSERT_EQ(pm.snis_curve.size(), bn.snis_curve.size());
  for (std::size_t k = 0; k < pm.snis_curve.size(); ++k) EXPECT_EQ(pm.snis_curve[k].snis, bn.snis_curve[k].snis);
}

TEST(Trainer, PoxmSelectsTheBestSnisAndReturnsThatModel) {
  const World w = make_world(10, 60);
  const auto cfg = small_config();
  const auto r = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  ASSERT_EQ(r.snis_curve.size(), 4U);
  EXPECT_EQ(r.snis_curve[0].p, 2U);
  EXPECT_EQ(r.snis_curve[1].lambda, 0.5);
  const auto best = std::max_element(r.snis_curve.begin(), r.snis_curve.end(),
                                     [](const GridPoint& a, const GridPoint& b) { return a.snis < b.snis; });
  EXPECT_EQ(r.chosen_p, best->p);
  EXPECT_EQ(r.chosen_lambda, best->lambda);
  const auto sel = top_p_selector(w.data.table, r.chosen_p);
  EXPECT_EQ(snis_value(w.data.log, ModelPolicy(r.model, w.ds), on(&sel)).value, best->snis);
  EXPECT_EQ(r.training_trace.size(), cfg.epochs);
}

TEST(Trainer, GridRunsAreOrderIndependent) {
  const World w = make_world(11);
  auto cfg = small_config();
  const auto a = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  cfg.p_grid = {4, 2};
  cfg.lambda_grid = {0.5, 0.0};
  EXPECT_EQ(train_poxm(w.data.log, w.ds, w.data.table, cfg), a);
}

TEST(Trainer, DeterministicAndThreadIndependent) {
  const World w = make_world(12, 300);
  const auto cfg = small_config();
  const std::size_t saved = max_threads();
  set_max_threads(1);
  const auto a = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  const auto d1 = train_direct(w.data.log, w.ds, cfg);
  set_max_threads(4);
  const auto b = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  const auto d4 = train_direct(w.data.log, w.ds, cfg);
  set_max_threads(saved);
  EXPECT_EQ(a, b);
  EXPECT_EQ(d1, d4);
  auto other = cfg;
  other.seed = 99;
  EXPECT_NE(train_poxm(w.data.log, w.ds, w.data.table, other).model, a.model);
}

TEST(Trainer, UnitPropensitiesLeaveTrainingUnchanged) {
  const World w = make_world(13);
  auto cfg = small_config();
  const auto plain = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  cfg.propensity_weights.assign(10, 1.0);
  EXPECT_EQ(train_poxm(w.data.log, w.ds, w.data.table, cfg), plain);
}

TEST(Trainer, AscentImprovesTheTrainingObjective) {
  const World w = make_world(14, 200);
  const auto sel = top_p_selector(w.data.table, 4);
  ObjectiveSpec spec;
  spec.selector = &sel;
  spec.lambda = 0.5;
  auto cfg = small_config();
  cfg.epochs = 10;
  std::vector<double> trace;
  const PolicyModel start(10, 7);
  const PolicyModel m = ascend(start, w.ds, w.data.log, spec, cfg, &trace);
  EXPECT_EQ(trace.size(), 10U);
  EXPECT_GT(batch_objective_gradient(m, w.ds, w.data.log, spec, 0, nullptr),
            batch_objective_gradient(start, w.ds, w.data.log, spec, 0, nullptr));
  cfg.epochs = 0;
  EXPECT_EQ(ascend(start, w.ds, w.data.log, spec, cfg), start);
}

TEST(Trainer, MomentumPathTrains) {
  const World w = make_world(15, 100);
  auto cfg = small_config();
  cfg.momentum = 0.5;
  const auto r = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  EXPECT_EQ(r, train_poxm(w.data.log, w.ds, w.data.table, cfg));
  EXPECT_NE(r.model, train_poxm(w.data.log, w.ds, w.data.table, small_config()).model);
}

TEST(Trainer, HugeStepsDiverge) {
  const World w = make_world(16, 100);
  auto cfg = small_config();
  // Parameters at the top of the double range overflow the logits.
  PolicyModel init(w.ds.l_total(), w.ds.d());
  for (LabelId y = 0; y < init.num_labels(); ++y) {
    init.bias()[y] = std::numeric_limits<double>::max();
    for (auto& v : init.row(y)) v = std::numeric_limits<double>::max();
  }
  try {
    (void)train_banditnet(w.data.log, w.ds, cfg, &init);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.where(), 0U);  // epoch
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(Trainer, DirectMethodGradientAndFit) {
  const World w = make_world(17, 30);
  Rng rng(18);
  PolicyModel m = testing::random_model(rng, 10, 7, 2.0);
  const auto& rec = w.data.log[0];
  const auto& x = w.ds[rec.instance_id];
  const auto term = direct_record_term(m, x, rec);
  for (std::size_t j = 0; j < rec.slate.size(); ++j) {
    double& b = m.bias()[rec.slate[j]];
    const double saved = b;
    b = saved + 1e-6;
    const double up = direct_record_term(m, x, rec).objective;
    b = saved - 1e-6;
    const double down = direct_record_term(m, x, rec).objective;
    b = saved;
    EXPECT_NEAR(term.gradient.values[j], (up - down) / 2e-6, 1e-7);
  }
  auto cfg = small_config();
  cfg.epochs = 20;
  const auto r = train_direct(w.data.log, w.ds, cfg);
  EXPECT_TRUE(r.snis_curve.empty());
  double ll_zero = 0.0;
  double ll_fit = 0.0;
  const PolicyModel zero(10, 7);
  for (const auto& q : w.data.log) {
    ll_zero += direct_record_term(zero, w.ds[q.instance_id], q).objective;
    ll_fit += direct_record_term(r.model, w.ds[q.instance_id], q).objective;
  }
  EXPECT_GT(ll_fit, ll_zero);
}

TEST(Trainer, DirectTermIsStableForLargeScores) {
  PolicyModel m(2, 1);
  m.bias()[0] = 800.0;
  m.bias()[1] = -800.0;
  BanditRecord rec{0, {0, 1}, {0.5, 1.0}, {0.5, 0.5}, {0.0, 1.0}};
  SparseInstance x;
  const auto t = direct_record_term(m, x, rec);
  EXPECT_NEAR(t.objective, -1600.0, 1e-9);
  EXPECT_NEAR(t.gradient.values[0], -1.0, 1e-12);
  EXPECT_NEAR(t.gradient.values[1], 1.0, 1e-12);
}

TEST(Trainer, ConfigAndInputValidation) {
  const World w = make_world(19);
  auto bad = small_config();
  bad.p_grid.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.lr = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small_config();
  bad.propensity_weights = {0.0};
  EXPECT_THROW(bad.validate(), ConfigError);
  auto cfg = small_config();
  cfg.mode = TrainMode::kPoxm;
  EXPECT_THROW((void)train(w.data.log, w.ds, nullptr, cfg), ConfigError);
  EXPECT_THROW((void)train(std::vector<BanditRecord>{}, w.ds, &w.data.table, cfg), ConfigError);
  const PolicyModel wrong(3, 3);
  EXPECT_THROW((void)train_poxm(w.data.log, w.ds, w.data.table, cfg, &wrong), ConfigError);
  EXPECT_EQ(parse_train_mode("pm-banditnet"), TrainMode::kPmBanditNet);
  EXPECT_EQ(to_string(TrainMode::kDirect), "direct");
  EXPECT_THROW((void)parse_train_mode("sgd"), ConfigError);
}

TEST(Trainer, HoldoutSelection) {
  const World w = make_world(20, 100);
  auto cfg = small_config();
  cfg.holdout_fraction = 0.3;
  const auto r = train_poxm(w.data.log, w.ds, w.data.table, cfg);
  EXPECT_EQ(r, train_poxm(w.data.log, w.ds, w.data.table, cfg));
  EXPECT_NE(r.model, train_poxm(w.data.log, w.ds, w.data.table, small_config()).model);
}

TEST(Trainer, ResultSidecar) {
  const World w = make_world(21);
  const auto cfg = small_config();
  const auto text = train_result_json(train_poxm(w.data.log, w.ds, w.data.table, cfg), cfg);
  for (const char* key : {"\"chosen_p\"", "\"chosen_lambda\"", "\"snis_curve\"", "\"training_trace\"", "\"mode\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}

}  // namespace
}  // namespace xbf
