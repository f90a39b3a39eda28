#include "xbf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "xbf/parallel.hpp"

namespace xbf {

LogView wpoxm_reweigh(std::span<const BanditRecord> log, std::span<const double> propensity_weights) {
  for (const double p : propensity_weights) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError(fmt::format("propensity weight {} outside (0, 1]", p));
  }
  for (const auto& rec : log) {
    for (const auto y : rec.slate) {
      if (y >= propensity_weights.size()) {
        throw ConfigError(fmt::format("record {}: no propensity weight for label {}", rec.instance_id, y));
      }
    }
  }
  return LogView(log, std::vector<double>(propensity_weights.begin(), propensity_weights.end()));
}

double EstimatorConfig::lambda(std::size_t position) const {
  if (lambdas.empty()) return 0.0;
  if (lambdas.size() == 1) return lambdas.front();
  if (position >= lambdas.size()) throw ConfigError(fmt::format("no lambda for slate position {}", position));
  return lambdas[position];
}

ImportanceWeights importance_weights(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg) {
  ImportanceWeights w;
  const auto records = log.records();
  w.n = records.size();
  if (w.n == 0) return w;
  w.ell = records.front().slate.size();
  for (const auto& rec : records) {
    if (rec.slate.size() != w.ell || rec.cond_propensities.size() != w.ell || rec.rewards.size() != w.ell) {
      throw ConfigError(fmt::format("record {}: slate length differs from {}", rec.instance_id, w.ell));
    }
    for (const double rho : rec.cond_propensities) {
      if (!(rho > 0.0)) throw ConfigError(fmt::format("record {}: non-positive logged propensity", rec.instance_id));
    }
  }
  if (cfg.weight_cap && !(*cfg.weight_cap > 0.0)) throw ConfigError("weight cap must be positive");

  const auto full = cfg.selector ? ActionSelector() : ActionSelector::full(pi.num_labels());
  const ActionSelector& selector = cfg.selector ? *cfg.selector : full;
  w.weights.assign(w.n * w.ell, 0.0);
  w.rewards.assign(w.n * w.ell, 0.0);
  std::vector<std::size_t> outside(w.n, 0);
  std::vector<std::size_t> clipped(w.n, 0);

  parallel_chunks(w.n, 128, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> prefix;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& rec = records[i];
      const auto allowed = selector.allowed(rec.instance_id);
      if (cfg.logging_support) {
        for (const auto y : allowed) {
          if (!(cfg.logging_support->prob(rec.instance_id, y) > 0.0)) {
            throw ConfigError(fmt::format("instance {}: selected action {} outside the logging support",
                                          rec.instance_id, y));
          }
        }
      }
      const auto probs = pi.restricted_probs(rec.instance_id, allowed);
      prefix.clear();
      for (std::size_t j = 0; j < w.ell; ++j) {
        const LabelId y = rec.slate[j];
        w.rewards[i * w.ell + j] = rec.rewards[j];
        const auto it = std::lower_bound(allowed.begin(), allowed.end(), y);
        if (it == allowed.end() || *it != y) {
          ++outside[i];
          continue;
        }
        const auto pos = static_cast<std::size_t>(it - allowed.begin());
        double weight = 0.0;
        if (probs[pos] > 0.0) {
          weight = slate_conditional(probs, prefix, pos) / rec.cond_propensities[j] * log.inverse_weight(y);
        }
        if (cfg.weight_cap && weight > *cfg.weight_cap) {
          weight = *cfg.weight_cap;
          ++clipped[i];
        }
        w.weights[i * w.ell + j] = weight;
        prefix.push_back(pos);
      }
    }
  });
  for (std::size_t i = 0; i < w.n; ++i) {
    w.outside_selector += outside[i];
    w.clipped += clipped[i];
  }
  return w;
}

namespace {

void fill_diagnostics(const ImportanceWeights& w, EstimatorReport& r) {
  r.n_used = w.n;
  r.outside_selector = w.outside_selector;
  r.clipped = w.clipped;
  r.per_position_mean_weight.assign(w.ell, 0.0);
  r.mean_weight = 0.0;
  r.ess = 0.0;
  if (w.n == 0 || w.ell == 0) return;
  for (std::size_t j = 0; j < w.ell; ++j) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < w.n; ++i) {
      const double v = w.weight(i, j);
      sum += v;
      sum_sq += v * v;
    }
    r.per_position_mean_weight[j] = sum / static_cast<double>(w.n);
    r.mean_weight += r.per_position_mean_weight[j];
    if (sum_sq > 0.0) r.ess += std::min(sum * sum / sum_sq, static_cast<double>(w.n));
  }
  r.mean_weight /= static_cast<double>(w.ell);
  r.ess /= static_cast<double>(w.ell);
}

}  // namespace

EstimatorReport reduce_is(const ImportanceWeights& w, std::span<const double> lambdas) {
  EstimatorReport r;
  fill_diagnostics(w, r);
  r.per_position_values.assign(w.ell, 0.0);
  if (w.n == 0) return r;
  for (std::size_t j = 0; j < w.ell; ++j) {
    const double lambda = lambdas.empty() ? 0.0 : (lambdas.size() == 1 ? lambdas[0] : lambdas[j]);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.n; ++i) sum += w.weight(i, j) * (w.reward(i, j) - lambda);
    r.per_position_values[j] = sum / static_cast<double>(w.n);
  }
  r.value = 0.0;
  for (const double v : r.per_position_values) r.value += v;
  return r;
}

EstimatorReport reduce_snis(const ImportanceWeights& w) {
  EstimatorReport r;
  fill_diagnostics(w, r);
  r.per_position_values.assign(w.ell, 0.0);
  bool any = false;
  for (std::size_t j = 0; j < w.ell; ++j) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < w.n; ++i) {
      num += w.weight(i, j) * w.reward(i, j);
      den += w.weight(i, j);
    }
    if (den > 0.0) {
      r.per_position_values[j] = num / den;
      any = true;
    }
  }
  if (!any) throw std::domain_error("snis_value: all importance weights are zero");
  r.value = 0.0;
  for (const double v : r.per_position_values) r.value += v;
  return r;
}

EstimatorReport is_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg) {
  EstimatorConfig full = cfg;
  full.selector = nullptr;
  return reduce_is(importance_weights(log, pi, full));
}

EstimatorReport sis_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg) {
  return reduce_is(importance_weights(log, pi, cfg));
}

EstimatorReport snis_value(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg) {
  return reduce_snis(importance_weights(log, pi, cfg));
}

double banditnet_objective(const LogView& log, const StochasticPolicy& pi, const EstimatorConfig& cfg) {
  const auto w = importance_weights(log, pi, cfg);
  std::vector<double> lambdas(w.ell);
  for (std::size_t j = 0; j < w.ell; ++j) lambdas[j] = cfg.lambda(j);
  return reduce_is(w, lambdas).value;
}

std::string to_json(const EstimatorReport& report) {
  nlohmann::ordered_json j;
  j["value"] = report.value;
  j["per_position_values"] = report.per_position_values;
  j["mean_weight"] = report.mean_weight;
  j["per_position_mean_weight"] = report.per_position_mean_weight;
  j["ess"] = report.ess;
  j["n_used"] = report.n_used;
  j["outside_selector"] = report.outside_selector;
  j["clipped"] = report.clipped;
  return j.dump(2);
}

}  // namespace xbf
