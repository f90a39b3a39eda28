#include "xbf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "xbf/estimators.hpp"
#include "xbf/op_counter.hpp"
#include "xbf/parallel.hpp"

namespace xbf {

namespace {

constexpr std::uint64_t kNegativeStream = 0x6e656761746976ULL;
constexpr std::uint64_t kHoldoutStream = 0x686f6c646f7574ULL;
constexpr std::size_t kDefaultNegatives = 1000;

void check_log(std::span<const BanditRecord> log, const Dataset& ds) {
  if (log.empty()) throw ConfigError("bandit log is empty");
  for (const auto& rec : log) {
    if (rec.instance_id >= ds.n()) {
      throw ConfigError(fmt::format("log references instance {} but the dataset has {}", rec.instance_id, ds.n()));
    }
    if (rec.slate.size() != rec.cond_propensities.size() || rec.slate.size() != rec.rewards.size()) {
      throw ConfigError(fmt::format("record {}: ragged slate", rec.instance_id));
    }
  }
}

PolicyModel initial_model(const Dataset& ds, const PolicyModel* init) {
  if (!init) return PolicyModel(ds.l_total(), ds.d());
  if (init->num_labels() != ds.l_total() || init->num_features() != ds.d()) {
    throw ConfigError(fmt::format("initial model is {}x{} but the data needs {}x{}", init->num_labels(),
                                  init->num_features(), ds.l_total(), ds.d()));
  }
  return *init;
}

// K distinct labels drawn uniformly from the complement of `excluded` (sorted, unique).
std::vector<LabelId> sample_negatives(std::size_t num_labels, std::span<const LabelId> excluded, std::size_t k,
                                      Rng& rng) {
  const std::size_t pool = num_labels - excluded.size();
  std::unordered_set<std::size_t> picked;
  std::vector<LabelId> out;
  out.reserve(k);
  // Floyd's algorithm over pool indices.
  for (std::size_t j = pool - k; j < pool; ++j) {
    std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
    if (!picked.insert(t).second) {
      t = j;
      picked.insert(t);
    }
    std::size_t label = t;
    for (const auto e : excluded) {
      if (e <= label) ++label;
    }
    out.push_back(static_cast<LabelId>(label));
    count_sampling_steps(1);
  }
  return out;
}

struct SelectionSplit {
  std::vector<BanditRecord> train;
  std::vector<BanditRecord> select;
};

// Returns false when no holdout is requested.
bool split_for_selection(std::span<const BanditRecord> log, const TrainConfig& cfg, SelectionSplit& out) {
  if (cfg.holdout_fraction <= 0.0) return false;
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, kHoldoutStream));
  shuffle(std::span<std::size_t>(order), rng);
  const auto held = static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * static_cast<double>(log.size()) - 1e-9));
  if (held == 0 || held >= log.size()) throw ConfigError("holdout leaves an empty training or selection log");
  std::vector<std::size_t> sel(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(sel.begin(), sel.end());
  std::sort(tr.begin(), tr.end());
  for (const auto i : sel) out.select.push_back(log[i]);
  for (const auto i : tr) out.train.push_back(log[i]);
  return true;
}

template <typename TermFn>
PolicyModel ascend_impl(PolicyModel model, const Dataset& ds, std::span<const BanditRecord> log,
                        const TrainConfig& cfg, double lr, std::vector<double>* trace, TermFn&& term) {
  check_log(log, ds);
  const std::size_t n = log.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> vel_w;
  std::vector<double> vel_b;
  DenseGradient dense;
  if (cfg.momentum > 0.0) {
    vel_w.assign(model.num_labels() * model.num_features(), 0.0);
    vel_b.assign(model.num_labels(), 0.0);
  }
  std::size_t global_batch = 0;
  std::vector<RecordTerm> terms;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, epoch));
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double epoch_objective = 0.0;
    for (std::size_t start = 0; start < n; start += batch, ++global_batch) {
      const std::size_t size = std::min(batch, n - start);
      terms.assign(size, RecordTerm{});
      const std::uint64_t batch_seed = derive_seed(cfg.seed ^ kNegativeStream, global_batch);
      const auto diverged = [&](const std::string& what) {
        return DivergenceError(fmt::format("{} in epoch {} (batch {})", what, epoch, global_batch), epoch);
      };
      try {
        parallel_chunks(size, 4, [&](std::size_t b, std::size_t e) {
          for (std::size_t k = b; k < e; ++k) {
            const auto& rec = log[order[start + k]];
            Rng neg(derive_seed(batch_seed, k));
            terms[k] = term(model, ds[rec.instance_id], rec, neg);
          }
        });
      } catch (const DivergenceError& e) {
        throw diverged(e.what());
      }
      double objective = 0.0;
      for (const auto& t : terms) {
        objective += t.objective;
        for (const double v : t.gradient.values) {
          if (!std::isfinite(v)) {
            throw diverged("gradient is not finite");
          }
        }
      }
      if (!std::isfinite(objective)) {
        throw diverged("objective is not finite");
      }
      epoch_objective += objective;
      const double scale = lr / static_cast<double>(size);
      if (cfg.momentum > 0.0) {
        dense.weights.assign(vel_w.size(), 0.0);
        dense.bias.assign(vel_b.size(), 0.0);
        for (std::size_t k = 0; k < size; ++k) {
          const auto& x = ds[log[order[start + k]].instance_id];
          const auto& g = terms[k].gradient;
          for (std::size_t a = 0; a < g.labels.size(); ++a) {
            const std::size_t row = static_cast<std::size_t>(g.labels[a]) * model.num_features();
            for (const auto& f : x.features) dense.weights[row + f.index] += g.values[a] * f.value;
            dense.bias[g.labels[a]] += g.values[a];
          }
        }
        auto bias = model.bias();
        for (std::size_t y = 0; y < model.num_labels(); ++y) {
          auto row = model.row(static_cast<LabelId>(y));
          for (std::size_t f = 0; f < model.num_features(); ++f) {
            const std::size_t idx = y * model.num_features() + f;
            vel_w[idx] = cfg.momentum * vel_w[idx] + dense.weights[idx];
            row[f] += scale * vel_w[idx];
            if (!std::isfinite(row[f])) throw diverged("update is not finite");
          }
          vel_b[y] = cfg.momentum * vel_b[y] + dense.bias[y];
          bias[y] += scale * vel_b[y];
          if (!std::isfinite(bias[y])) throw diverged("update is not finite");
        }
      } else {
        for (std::size_t k = 0; k < size; ++k) {
          const auto& x = ds[log[order[start + k]].instance_id];
          const auto& g = terms[k].gradient;
          apply_gradient(model, x, g, scale);
          for (const auto y : g.labels) {
            if (!std::isfinite(model.bias()[y])) throw diverged("update is not finite");
            for (const auto& f : x.features) {
              if (!std::isfinite(model.weight(y, f.index))) throw diverged("update is not finite");
            }
          }
        }
      }
    }
    if (trace) trace->push_back(epoch_objective / static_cast<double>(n));
  }
  return model;
}

struct Candidate {
  std::size_t p = 0;
  double lambda = 0.0;
  double snis = 0.0;
};

// Strictly better, so earlier (smaller p, then smaller lambda) grid points win ties.
bool better(double snis, const std::optional<Candidate>& best) { return !best || snis > best->snis; }

std::vector<std::size_t> sorted_p_grid(const TrainConfig& cfg) {
  auto grid = cfg.p_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::vector<double> sorted_lambda_grid(const TrainConfig& cfg) {
  auto grid = cfg.lambda_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

LogView selection_view(std::span<const BanditRecord> log, const TrainConfig& cfg) {
  if (cfg.propensity_weights.empty()) return LogView(log);
  return wpoxm_reweigh(log, cfg.propensity_weights);
}

}  // namespace

TrainMode parse_train_mode(std::string_view name) {
  if (name == "poxm") return TrainMode::kPoxm;
  if (name == "banditnet") return TrainMode::kBanditNet;
  if (name == "pm-banditnet") return TrainMode::kPmBanditNet;
  if (name == "direct") return TrainMode::kDirect;
  throw ConfigError(fmt::format("unknown training mode '{}'", name));
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kPoxm: return "poxm";
    case TrainMode::kBanditNet: return "banditnet";
    case TrainMode::kPmBanditNet: return "pm-banditnet";
    case TrainMode::kDirect: return "direct";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (p_grid.empty()) throw ConfigError("p grid is empty");
  if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
  if (std::find(p_grid.begin(), p_grid.end(), std::size_t{0}) != p_grid.end()) throw ConfigError("p must be positive");
  for (const double l : lambda_grid) {
    if (!std::isfinite(l)) throw ConfigError("lambda must be finite");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(fmt::format("lr must be positive, got {}", lr));
  if (!(direct_lr > 0.0) || !std::isfinite(direct_lr)) throw ConfigError("direct lr must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  if (negative_samples && *negative_samples == 0) throw ConfigError("negative samples must be positive");
  for (const double p : propensity_weights) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError(fmt::format("propensity weight {} outside (0, 1]", p));
  }
}

RecordTerm record_term(const PolicyModel& model, const SparseInstance& x, const BanditRecord& record,
                       const ObjectiveSpec& spec, Rng* negatives) {
  const std::size_t num_labels = model.num_labels();
  std::vector<LabelId> cand;
  std::vector<double> scale;
  if (spec.negative_samples > 0) {
    if (spec.selector) throw ConfigError("negative sampling requires the full label set");
    std::vector<LabelId> shown(record.slate.begin(), record.slate.end());
    std::sort(shown.begin(), shown.end());
    shown.erase(std::unique(shown.begin(), shown.end()), shown.end());
    const std::size_t pool = num_labels - shown.size();
    const std::size_t k = std::min(spec.negative_samples, pool);
    std::vector<LabelId> neg;
    if (k > 0) {
      if (!negatives) throw ConfigError("negative sampling needs a generator");
      neg = sample_negatives(num_labels, shown, k, *negatives);
    }
    const double neg_scale = k > 0 ? static_cast<double>(pool) / static_cast<double>(k) : 0.0;
    cand = shown;
    cand.insert(cand.end(), neg.begin(), neg.end());
    std::vector<std::size_t> idx(cand.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return cand[a] < cand[b]; });
    std::vector<LabelId> sorted(cand.size());
    scale.resize(cand.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      sorted[a] = cand[idx[a]];
      scale[a] = idx[a] < shown.size() ? 1.0 : neg_scale;
    }
    cand = std::move(sorted);
  } else if (spec.selector) {
    const auto allowed = spec.selector->allowed(record.instance_id);
    cand.assign(allowed.begin(), allowed.end());
    scale.assign(cand.size(), 1.0);
  } else {
    cand.resize(num_labels);
    std::iota(cand.begin(), cand.end(), LabelId{0});
    scale.assign(cand.size(), 1.0);
  }

  const auto z = logits(model, x, cand);
  const double zmax = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(zmax)) throw DivergenceError(fmt::format("instance {}: non-finite logits", x.id), x.id);
  std::vector<double> mass(cand.size());
  for (std::size_t a = 0; a < cand.size(); ++a) mass[a] = scale[a] * std::exp(z[a] - zmax);
  count_exponentials(cand.size());

  RecordTerm out;
  out.gradient.labels = cand;
  out.gradient.values.assign(cand.size(), 0.0);
  std::vector<char> removed(cand.size(), 0);
  for (std::size_t j = 0; j < record.slate.size(); ++j) {
    const LabelId y = record.slate[j];
    const auto it = std::lower_bound(cand.begin(), cand.end(), y);
    if (it == cand.end() || *it != y) continue;
    const auto pos = static_cast<std::size_t>(it - cand.begin());
    const bool masked = spec.feedback_mask && !spec.feedback_mask->contains(record.instance_id, y);
    if (!masked) {
      double remaining = 0.0;
      for (std::size_t a = 0; a < cand.size(); ++a) {
        if (!removed[a]) remaining += mass[a];
      }
      if (remaining > 0.0 && mass[pos] > 0.0) {
        const double cond = mass[pos] / remaining;
        double w = cond / record.cond_propensities[j];
        if (!spec.label_weights.empty()) w /= spec.label_weights[y];
        const double c = w * (record.rewards[j] - spec.lambda);
        out.objective += c;
        out.gradient.values[pos] += c;
        const double f = c / remaining;
        for (std::size_t a = 0; a < cand.size(); ++a) {
          if (!removed[a]) out.gradient.values[a] -= f * mass[a];
        }
        count_multiply_adds(2 * cand.size());
      }
    }
    removed[pos] = 1;
  }
  return out;
}

RecordTerm direct_record_term(const PolicyModel& model, const SparseInstance& x, const BanditRecord& record) {
  RecordTerm out;
  out.gradient.labels = record.slate;
  out.gradient.values.resize(record.slate.size());
  for (std::size_t j = 0; j < record.slate.size(); ++j) {
    const double s = model.score(record.slate[j], x.features);
    const double r = record.rewards[j];
    // log sigmoid(s) and log sigmoid(-s), stable in both tails.
    const double log_pos = s >= 0.0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
    const double log_neg = log_pos - s;
    out.objective += r * log_pos + (1.0 - r) * log_neg;
    out.gradient.values[j] = r - std::exp(log_pos);
  }
  count_exponentials(2 * record.slate.size());
  return out;
}

double batch_objective_gradient(const PolicyModel& model, const Dataset& ds, std::span<const BanditRecord> records,
                                const ObjectiveSpec& spec, std::uint64_t seed, DenseGradient* out) {
  if (out) {
    out->weights.resize(model.num_labels() * model.num_features(), 0.0);
    out->bias.resize(model.num_labels(), 0.0);
  }
  double objective = 0.0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    const auto& x = ds[rec.instance_id];
    Rng neg(derive_seed(seed, k));
    const auto term = record_term(model, x, rec, spec, &neg);
    objective += term.objective;
    if (!out) continue;
    for (std::size_t a = 0; a < term.gradient.labels.size(); ++a) {
      const LabelId y = term.gradient.labels[a];
      const double g = term.gradient.values[a];
      for (const auto& f : x.features) out->weights[static_cast<std::size_t>(y) * model.num_features() + f.index] += g * f.value;
      out->bias[y] += g;
    }
  }
  return objective;
}

PolicyModel ascend(PolicyModel init, const Dataset& ds, std::span<const BanditRecord> log, const ObjectiveSpec& spec,
                   const TrainConfig& cfg, std::vector<double>* trace) {
  return ascend_impl(std::move(init), ds, log, cfg, cfg.lr, trace,
                     [&](const PolicyModel& m, const SparseInstance& x, const BanditRecord& rec, Rng& neg) {
                       return record_term(m, x, rec, spec, &neg);
                     });
}

TrainResult train_poxm(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable& table,
                       const TrainConfig& cfg, const PolicyModel* init) {
  cfg.validate();
  check_log(log, ds);
  if (table.size() != ds.n()) {
    throw ConfigError(fmt::format("logging table has {} rows but the dataset has {}", table.size(), ds.n()));
  }
  SelectionSplit split;
  const bool held = split_for_selection(log, cfg, split);
  const std::span<const BanditRecord> train_log = held ? std::span<const BanditRecord>(split.train) : log;
  const LogView select = selection_view(held ? std::span<const BanditRecord>(split.select) : log, cfg);
  const PolicyModel start = initial_model(ds, init);

  TrainResult result;
  result.mode = TrainMode::kPoxm;
  std::optional<Candidate> best;
  for (const std::size_t p : sorted_p_grid(cfg)) {
    const ActionSelector selector = top_p_selector(table, p);
    for (const double lambda : sorted_lambda_grid(cfg)) {
      ObjectiveSpec spec;
      spec.selector = &selector;
      spec.lambda = lambda;
      spec.label_weights = cfg.propensity_weights;
      std::vector<double> trace;
      PolicyModel model = ascend(start, ds, train_log, spec, cfg, &trace);
      EstimatorConfig ecfg;
      ecfg.selector = &selector;
      const double snis = snis_value(select, ModelPolicy(model, ds), ecfg).value;
      result.snis_curve.push_back({p, lambda, snis, trace.empty() ? 0.0 : trace.back()});
      if (better(snis, best)) {
        best = Candidate{p, lambda, snis};
        result.model = std::move(model);
        result.training_trace = std::move(trace);
      }
    }
  }
  result.chosen_p = best->p;
  result.chosen_lambda = best->lambda;
  return result;
}

namespace {

TrainResult train_full_softmax(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable* table,
                               const TrainConfig& cfg, const PolicyModel* init, TrainMode mode) {
  cfg.validate();
  check_log(log, ds);
  SelectionSplit split;
  const bool held = split_for_selection(log, cfg, split);
  const std::span<const BanditRecord> train_log = held ? std::span<const BanditRecord>(split.train) : log;
  const LogView select = selection_view(held ? std::span<const BanditRecord>(split.select) : log, cfg);
  const PolicyModel start = initial_model(ds, init);
  const std::size_t negatives =
      ds.l_total() > cfg.full_softmax_threshold ? cfg.negative_samples.value_or(kDefaultNegatives) : 0;

  std::vector<std::size_t> p_values{0};
  if (mode == TrainMode::kPmBanditNet) {
    if (!table) throw ConfigError("pm-banditnet needs a logging table");
    if (table->size() != ds.n()) throw ConfigError("logging table does not match the dataset");
    p_values = sorted_p_grid(cfg);
  }

  TrainResult result;
  result.mode = mode;
  std::optional<Candidate> best;
  for (const std::size_t p : p_values) {
    std::optional<ActionSelector> mask;
    if (p > 0) mask = top_p_selector(*table, p);
    for (const double lambda : sorted_lambda_grid(cfg)) {
      ObjectiveSpec spec;
      spec.feedback_mask = mask ? &*mask : nullptr;
      spec.lambda = lambda;
      spec.label_weights = cfg.propensity_weights;
      spec.negative_samples = negatives;
      std::vector<double> trace;
      PolicyModel model = ascend(start, ds, train_log, spec, cfg, &trace);
      const double snis = snis_value(select, ModelPolicy(model, ds), EstimatorConfig{}).value;
      result.snis_curve.push_back({p, lambda, snis, trace.empty() ? 0.0 : trace.back()});
      if (better(snis, best)) {
        best = Candidate{p, lambda, snis};
        result.model = std::move(model);
        result.training_trace = std::move(trace);
      }
    }
  }
  result.chosen_p = best->p;
  result.chosen_lambda = best->lambda;
  return result;
}

}  // namespace

TrainResult train_banditnet(std::span<const BanditRecord> log, const Dataset& ds, const TrainConfig& cfg,
                            const PolicyModel* init) {
  return train_full_softmax(log, ds, nullptr, cfg, init, TrainMode::kBanditNet);
}

TrainResult train_pm_banditnet(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable& table,
                               const TrainConfig& cfg, const PolicyModel* init) {
  return train_full_softmax(log, ds, &table, cfg, init, TrainMode::kPmBanditNet);
}

TrainResult train_direct(std::span<const BanditRecord> log, const Dataset& ds, const TrainConfig& cfg,
                         const PolicyModel* init) {
  cfg.validate();
  check_log(log, ds);
  TrainResult result;
  result.mode = TrainMode::kDirect;
  result.model = ascend_impl(initial_model(ds, init), ds, log, cfg, cfg.direct_lr, &result.training_trace,
                             [](const PolicyModel& m, const SparseInstance& x, const BanditRecord& rec, Rng&) {
                               return direct_record_term(m, x, rec);
                             });
  return result;
}

TrainResult train(std::span<const BanditRecord> log, const Dataset& ds, const LoggingTable* table,
                  const TrainConfig& cfg, const PolicyModel* init) {
  switch (cfg.mode) {
    case TrainMode::kPoxm:
      if (!table) throw ConfigError("poxm needs a logging table");
      return train_poxm(log, ds, *table, cfg, init);
    case TrainMode::kBanditNet: return train_banditnet(log, ds, cfg, init);
    case TrainMode::kPmBanditNet:
      if (!table) throw ConfigError("pm-banditnet needs a logging table");
      return train_pm_banditnet(log, ds, *table, cfg, init);
    case TrainMode::kDirect: return train_direct(log, ds, cfg, init);
  }
  throw ConfigError("unknown training mode");
}

std::string train_result_json(const TrainResult& result, const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(result.mode));
  nlohmann::ordered_json c;
  c["p_grid"] = cfg.p_grid;
  c["lambda_grid"] = cfg.lambda_grid;
  c["epochs"] = cfg.epochs;
  c["lr"] = cfg.lr;
  c["direct_lr"] = cfg.direct_lr;
  c["batch_size"] = cfg.batch_size;
  c["seed"] = cfg.seed;
  c["negative_samples"] = cfg.negative_samples ? nlohmann::ordered_json(*cfg.negative_samples) : nullptr;
  c["full_softmax_threshold"] = cfg.full_softmax_threshold;
  c["momentum"] = cfg.momentum;
  c["holdout_fraction"] = cfg.holdout_fraction;
  c["wpoxm"] = !cfg.propensity_weights.empty();
  j["config"] = c;
  if (result.mode != TrainMode::kDirect) {
    if (result.mode != TrainMode::kBanditNet) j["chosen_p"] = result.chosen_p;
    j["chosen_lambda"] = result.chosen_lambda;
  }
  auto curve = nlohmann::ordered_json::array();
  for (const auto& g : result.snis_curve) {
    nlohmann::ordered_json e;
    if (g.p > 0) e["p"] = g.p;
    e["lambda"] = g.lambda;
    e["snis"] = g.snis;
    e["final_objective"] = g.final_objective;
    curve.push_back(e);
  }
  j["snis_curve"] = curve;
  j["training_trace"] = result.training_trace;
  return j.dump(2);
}

}  // namespace xbf
