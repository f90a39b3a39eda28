#include "xbf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "xbf/parallel.hpp"

namespace xbf {

PropensityModel fit_propensities(std::span<const std::size_t> freqs, std::size_t n, double a, double b) {
  if (n == 0) throw ConfigError("propensity model needs a positive instance count");
  if (!(b > -1.0)) throw ConfigError("propensity parameter b must exceed -1");
  PropensityModel model;
  model.a = a;
  model.b = b;
  const double c = (std::log(static_cast<double>(n)) - 1.0) * std::pow(b + 1.0, a);
  model.p.resize(freqs.size());
  for (std::size_t y = 0; y < freqs.size(); ++y) {
    const double nb = static_cast<double>(freqs[y]) + b;
    const double p = 1.0 / (1.0 + c * std::exp(-a * std::log(nb)));
    model.p[y] = c <= 0.0 ? 1.0 : std::min(1.0, p);
  }
  return model;
}

void RankingPolicy::distribution(std::size_t, std::vector<LabelId>&, std::vector<double>&) const {
  throw std::logic_error("policy has no stochastic distribution");
}

std::vector<LabelId> RankingPolicy::ranking(std::size_t, std::size_t) const {
  throw std::logic_error("policy has no deterministic ranking");
}

SoftmaxRanker::SoftmaxRanker(const PolicyModel& model, const Dataset& ds, const ActionSelector* selector)
    : model_(&model), ds_(&ds), selector_(selector) {
  if (!selector_) full_ = ActionSelector::full(model.num_labels());
}

void SoftmaxRanker::distribution(std::size_t instance, std::vector<LabelId>& actions,
                                 std::vector<double>& probs) const {
  const auto allowed = (selector_ ? *selector_ : full_).allowed(instance);
  actions.assign(allowed.begin(), allowed.end());
  probs = restricted_softmax(logits(*model_, (*ds_)[instance], allowed));
}

TopKRanker::TopKRanker(const PolicyModel& model, const Dataset& ds, const ActionSelector* selector)
    : model_(&model), ds_(&ds), selector_(selector) {
  if (!selector_) full_ = ActionSelector::full(model.num_labels());
}

std::vector<LabelId> TopKRanker::ranking(std::size_t instance, std::size_t k) const {
  const auto allowed = (selector_ ? *selector_ : full_).allowed(instance);
  if (allowed.size() < k) {
    throw ConfigError(fmt::format("instance {}: k = {} exceeds {} available actions", instance, k, allowed.size()));
  }
  return top_k(*model_, (*ds_)[instance], allowed, k);
}

void TableRanker::distribution(std::size_t instance, std::vector<LabelId>& actions,
                               std::vector<double>& probs) const {
  const auto& row = table_->row(instance);
  actions = row.actions;
  probs = row.probs;
}

namespace {

struct Sums {
  std::vector<double> reward;
  std::vector<double> ndcr;
  std::vector<double> psr;
};

// Adds one ranked list's contribution to every k, scaled by `weight`.
void score_list(std::span<const LabelId> list, const SparseInstance& x, std::span<const std::size_t> ks,
                const PropensityModel* prop, std::span<const double> ideal_dcg, std::span<const double> ideal_psr,
                double weight, Sums& s) {
  for (std::size_t a = 0; a < ks.size(); ++a) {
    const std::size_t k = ks[a];
    double hits = 0.0;
    double dcg = 0.0;
    double psr = 0.0;
    for (std::size_t l = 0; l < k && l < list.size(); ++l) {
      if (!x.has_label(list[l])) continue;
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(l) + 2.0);
      if (prop) psr += 1.0 / prop->p[list[l]];
    }
    s.reward[a] += weight * hits / static_cast<double>(k);
    s.ndcr[a] += weight * dcg / ideal_dcg[a];
    if (prop) s.psr[a] += weight * psr / ideal_psr[a];
  }
}

}  // namespace

MetricReport evaluate(const RankingPolicy& pi, const Dataset& test, const PropensityModel* prop,
                      const EvalConfig& cfg) {
  if (cfg.ks.empty()) throw ConfigError("no cutoffs requested");
  for (const auto k : cfg.ks) {
    if (k == 0) throw ConfigError("cutoff k must be positive");
  }
  if (cfg.n_samples == 0) throw ConfigError("n_samples must be positive");
  if (prop && prop->p.size() < test.l_total()) throw ConfigError("propensity model does not cover every label");
  const std::size_t kmax = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  const bool det = pi.deterministic();
  const std::size_t na = cfg.ks.size();

  const std::size_t n = test.n();
  std::vector<Sums> per(n);
  std::vector<char> used(n, 0);
  parallel_chunks(n, 64, [&](std::size_t begin, std::size_t end) {
    std::vector<LabelId> actions;
    std::vector<double> probs;
    std::vector<double> label_inv;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& x = test[i];
      if (x.labels.empty()) continue;
      used[i] = 1;
      Sums& s = per[i];
      s.reward.assign(na, 0.0);
      s.ndcr.assign(na, 0.0);
      s.psr.assign(na, 0.0);
      std::vector<double> ideal_dcg(na, 0.0);
      std::vector<double> ideal_psr(na, 0.0);
      if (prop) {
        label_inv.clear();
        for (const auto y : x.labels) label_inv.push_back(1.0 / prop->p[y]);
        std::sort(label_inv.begin(), label_inv.end(), std::greater<>());
      }
      for (std::size_t a = 0; a < na; ++a) {
        const std::size_t m = std::min(cfg.ks[a], x.labels.size());
        for (std::size_t l = 0; l < m; ++l) {
          ideal_dcg[a] += 1.0 / std::log2(static_cast<double>(l) + 2.0);
          if (prop) ideal_psr[a] += label_inv[l];
        }
      }
      if (det) {
        const auto list = pi.ranking(i, kmax);
        score_list(list, x, cfg.ks, prop, ideal_dcg, ideal_psr, 1.0, s);
        continue;
      }
      pi.distribution(i, actions, probs);
      const auto positive = static_cast<std::size_t>(std::count_if(probs.begin(), probs.end(), [](double p) { return p > 0.0; }));
      if (positive < kmax) {
        throw ConfigError(
            fmt::format("instance {}: k = {} exceeds {} actions with positive probability", i, kmax, positive));
      }
      Rng rng(derive_seed(cfg.seed, i));
      const double w = 1.0 / static_cast<double>(cfg.n_samples);
      for (std::size_t t = 0; t < cfg.n_samples; ++t) {
        const auto slate = sample_slate(actions, probs, kmax, rng);
        score_list(slate.actions, x, cfg.ks, prop, ideal_dcg, ideal_psr, w, s);
      }
    }
  });

  MetricReport report;
  report.ks = cfg.ks;
  report.n_samples = det ? 1 : cfg.n_samples;
  report.seed = cfg.seed;
  report.deterministic = det;
  report.reward.assign(na, 0.0);
  report.ndcr.assign(na, 0.0);
  if (prop) report.psr.assign(na, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) continue;
    ++report.instances;
    for (std::size_t a = 0; a < na; ++a) {
      report.reward[a] += per[i].reward[a];
      report.ndcr[a] += per[i].ndcr[a];
      if (prop) report.psr[a] += per[i].psr[a];
    }
  }
  if (report.instances == 0) throw ConfigError("test set has no labelled instances");
  const double inv = 1.0 / static_cast<double>(report.instances);
  for (std::size_t a = 0; a < na; ++a) {
    report.reward[a] *= inv;
    report.ndcr[a] *= inv;
    if (prop) report.psr[a] *= inv;
  }
  return report;
}

double reward_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, std::size_t n_samples,
                   std::uint64_t seed) {
  return evaluate(pi, test, nullptr, EvalConfig{{k}, n_samples, seed}).reward[0];
}

double ndcr_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, std::size_t n_samples,
                 std::uint64_t seed) {
  return evaluate(pi, test, nullptr, EvalConfig{{k}, n_samples, seed}).ndcr[0];
}

double psr_at_k(const RankingPolicy& pi, const Dataset& test, std::size_t k, const PropensityModel& prop,
                std::size_t n_samples, std::uint64_t seed) {
  return evaluate(pi, test, &prop, EvalConfig{{k}, n_samples, seed}).psr[0];
}

std::string MetricReport::table_header() const {
  std::string out;
  auto add = [&](const char* name) {
    for (const auto k : ks) {
      if (!out.empty()) out += '\t';
      out += fmt::format("{}@{}", name, k);
    }
  };
  add("R");
  add("nDCR");
  if (!psr.empty()) add("PSR");
  return out;
}

std::string MetricReport::table_row() const {
  std::string out;
  auto add = [&](const std::vector<double>& values) {
    for (const double v : values) {
      if (!out.empty()) out += '\t';
      out += fmt::format("{:.2f}", 100.0 * v);
    }
  };
  add(reward);
  add(ndcr);
  add(psr);
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json metrics;
  for (std::size_t a = 0; a < ks.size(); ++a) {
    metrics[fmt::format("R@{}", ks[a])] = reward[a];
    metrics[fmt::format("nDCR@{}", ks[a])] = ndcr[a];
    if (!psr.empty()) metrics[fmt::format("PSR@{}", ks[a])] = psr[a];
  }
  j["metrics"] = metrics;
  j["scale"] = 1;
  j["n_samples"] = n_samples;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["instances"] = instances;
  return j.dump(2);
}

}  // namespace xbf
