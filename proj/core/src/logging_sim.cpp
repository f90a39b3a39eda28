#include "xbf/logging_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "xbf/parallel.hpp"

namespace xbf {

void LoggingConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("alpha={} outside (0, 1]", alpha));
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError(fmt::format("temperature={} must be positive", temperature));
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError(fmt::format("beta={} must be >= 0", beta));
  if (ell == 0) throw ConfigError("slate size ell must be positive");
  if (top_m < ell) throw ConfigError(fmt::format("top_m={} smaller than ell={}", top_m, ell));
}

LoggingTable::LoggingTable(std::vector<LoggingRow> rows, std::size_t num_labels)
    : rows_(std::move(rows)), num_labels_(num_labels) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.actions.size() != r.probs.size()) {
      throw ConfigError(fmt::format("logging table row {}: actions/probs size mismatch", i));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < r.actions.size(); ++k) {
      if (r.actions[k] >= num_labels_) {
        throw ConfigError(fmt::format("logging table row {}: label {} >= L={}", i, r.actions[k], num_labels_));
      }
      if (!(r.probs[k] > 0.0)) throw ConfigError(fmt::format("logging table row {}: non-positive probability", i));
      sum += r.probs[k];
    }
    if (!r.actions.empty() && std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError(fmt::format("logging table row {}: probabilities sum to {}", i, sum));
    }
    auto sorted = r.actions;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError(fmt::format("logging table row {}: duplicate action", i));
    }
  }
}

double LoggingTable::prob(std::size_t instance, LabelId y) const {
  const auto& r = row(instance);
  for (std::size_t k = 0; k < r.actions.size(); ++k) {
    if (r.actions[k] == y) return r.probs[k];
  }
  return 0.0;
}

std::vector<std::size_t> LoggingTable::padded_instances() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].padded) out.push_back(i);
  }
  return out;
}

PolicyModel fit_base_policy(const Dataset& train_fraction, std::size_t epochs, double lr, std::uint64_t seed) {
  if (train_fraction.empty()) throw ConfigError("fit_base_policy: empty training data");
  if (!(lr > 0.0)) throw ConfigError("fit_base_policy: learning rate must be positive");
  const std::size_t num_labels = train_fraction.l_total();
  PolicyModel model(num_labels, train_fraction.d());
  const auto all = ActionSelector::full(num_labels);

  std::vector<std::size_t> order(train_fraction.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  LogitGradient g;
  g.labels.assign(all.allowed(0).begin(), all.allowed(0).end());
  g.values.resize(num_labels);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(derive_seed(seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);
    double loss = 0.0;
    for (const auto i : order) {
      const auto& x = train_fraction[i];
      if (x.labels.empty()) continue;
      const auto p = restricted_softmax(logits(model, x, all.allowed(0)));
      const double q = 1.0 / static_cast<double>(x.labels.size());
      for (std::size_t y = 0; y < num_labels; ++y) g.values[y] = -p[y];
      for (const auto y : x.labels) {
        g.values[y] += q;
        loss -= q * std::log(std::max(p[y], 1e-300));
      }
      apply_gradient(model, x, g, lr);
    }
    if (!std::isfinite(loss)) {
      throw DivergenceError(fmt::format("fit_base_policy: loss diverged in epoch {}", epoch), epoch);
    }
  }
  return model;
}

namespace {

std::vector<LabelId> labels_by_frequency(std::span<const std::size_t> counts) {
  std::vector<LabelId> order(counts.size());
  std::iota(order.begin(), order.end(), LabelId{0});
  std::stable_sort(order.begin(), order.end(), [&](LabelId a, LabelId b) { return counts[a] > counts[b]; });
  return order;
}

constexpr double kPaddingProbability = 1e-6;

}  // namespace

LoggingTable build_logging_table(const PolicyModel& base, const Dataset& ds, const LoggingConfig& cfg,
                                 std::span<const std::size_t> padding_counts) {
  cfg.validate();
  if (base.num_labels() != ds.l_total()) throw ConfigError("build_logging_table: model/dataset label mismatch");
  if (cfg.ell > ds.l_total()) throw ConfigError("build_logging_table: ell exceeds the number of labels");
  std::vector<std::size_t> own_counts;
  if (padding_counts.empty()) {
    own_counts = label_frequencies(ds);
    padding_counts = own_counts;
  }
  const auto frequent = labels_by_frequency(padding_counts);
  const auto all = ActionSelector::full(ds.l_total());
  const double gumbel_mean = std::numbers::egamma;

  std::vector<LoggingRow> rows(ds.n());
  parallel_chunks(ds.n(), 64, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto p = restricted_softmax(logits(base, ds[i], all.allowed(0)));
      std::vector<LabelId> kept;
      for (const auto y : top_k_of_scores(all.allowed(0), p, std::min(cfg.top_m, p.size()))) {
        if (p[y] > 0.0) kept.push_back(y);
      }
      std::vector<double> base_prob;
      base_prob.reserve(kept.size());
      for (const auto y : kept) base_prob.push_back(p[y]);

      LoggingRow row;
      if (kept.size() < cfg.ell) {
        row.padded = true;
        for (const auto y : frequent) {
          if (kept.size() >= cfg.ell) break;
          if (std::find(kept.begin(), kept.end(), y) != kept.end()) continue;
          kept.push_back(y);
          base_prob.push_back(kPaddingProbability);
        }
      }

      // Noise stream is keyed on the complemented seed so it never coincides
      // with the slate-sampling stream derive_seed(cfg.seed, i).
      Rng rng(derive_seed(~cfg.seed, i));
      std::vector<double> energy(kept.size());
      for (std::size_t k = 0; k < kept.size(); ++k) {
        double e = std::log(base_prob[k]);
        if (cfg.beta > 0.0) e += cfg.beta * (rng.gumbel() - gumbel_mean);
        energy[k] = e / cfg.temperature;
      }
      const auto rho = restricted_softmax(energy);
      const auto order = top_k_of_scores(kept, rho, kept.size());
      row.actions = order;
      row.probs.reserve(order.size());
      for (const auto y : order) {
        const auto k = static_cast<std::size_t>(std::find(kept.begin(), kept.end(), y) - kept.begin());
        row.probs.push_back(rho[k]);
      }
      rows[i] = std::move(row);
    }
  });
  return LoggingTable(std::move(rows), ds.l_total());
}

std::vector<BanditRecord> generate_bandit_log(const LoggingTable& table, const Dataset& ds, const LoggingConfig& cfg) {
  cfg.validate();
  if (table.size() != ds.n()) {
    throw ConfigError(fmt::format("logging table has {} rows for {} instances", table.size(), ds.n()));
  }
  std::vector<BanditRecord> log(ds.n());
  parallel_chunks(ds.n(), 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& row = table.row(i);
      if (row.actions.size() < cfg.ell) {
        throw ConfigError(fmt::format("instance {}: {} supported actions for a slate of {}", i,
                                      row.actions.size(), cfg.ell));
      }
      Rng rng(derive_seed(cfg.seed, i));
      Slate slate = sample_slate(row.actions, row.probs, cfg.ell, rng);
      BanditRecord rec;
      rec.instance_id = i;
      rec.cond_propensities = std::move(slate.propensities);
      rec.marg_propensities.reserve(cfg.ell);
      rec.rewards.reserve(cfg.ell);
      for (const auto y : slate.actions) {
        rec.marg_propensities.push_back(std::max(table.prob(i, y), kPropensityFloor));
        rec.rewards.push_back(ds[i].has_label(y) ? 1.0 : 0.0);
      }
      rec.slate = std::move(slate.actions);
      log[i] = std::move(rec);
    }
  });
  return log;
}

LoggingStats logging_stats(std::span<const BanditRecord> log, const LoggingTable& table, const Dataset& ds) {
  LoggingStats s;
  if (table.size() != ds.n()) throw ConfigError("logging_stats: table/dataset size mismatch");
  std::size_t max_support = 0;
  for (const auto& r : table.rows()) max_support = std::max(max_support, r.actions.size());
  s.coverage.assign(max_support, 0.0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& x = ds[i];
    if (x.labels.empty()) continue;
    ++s.labelled_instances;
    const auto& row = table.row(i);
    std::size_t captured = 0;
    const double denom = static_cast<double>(x.labels.size());
    for (std::size_t k = 0; k < max_support; ++k) {
      if (k < row.actions.size() && x.has_label(row.actions[k])) ++captured;
      s.coverage[k] += static_cast<double>(captured) / denom;
    }
  }
  if (s.labelled_instances > 0) {
    for (double& c : s.coverage) c /= static_cast<double>(s.labelled_instances);
  }
  if (!log.empty()) {
    s.ell = log.front().slate.size();
    double total = 0.0;
    for (const auto& rec : log) {
      total += std::accumulate(rec.rewards.begin(), rec.rewards.end(), 0.0) / static_cast<double>(rec.rewards.size());
    }
    s.expected_reward_at_ell = total / static_cast<double>(log.size());
  }
  s.padded_instances = table.padded_instances();
  return s;
}

ActionSelector top_p_selector(const LoggingTable& table, std::size_t p) {
  if (p == 0) throw ConfigError("top_p_selector: p must be positive");
  std::vector<std::vector<LabelId>> sets(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table.row(i);
    const std::size_t take = std::min(p, row.actions.size());
    sets[i].assign(row.actions.begin(), row.actions.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return ActionSelector::from_sets(std::move(sets), table.num_labels(), ActionSelector::Kind::kTopPOfLogging);
}

std::vector<double> TablePolicy::restricted_probs(std::size_t instance, std::span<const LabelId> allowed) const {
  const auto& row = table_->row(instance);
  std::vector<double> out(allowed.size(), 0.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < row.actions.size(); ++k) {
    const auto it = std::lower_bound(allowed.begin(), allowed.end(), row.actions[k]);
    if (it != allowed.end() && *it == row.actions[k]) {
      out[static_cast<std::size_t>(it - allowed.begin())] = row.probs[k];
    }
  }
  for (double v : out) sum += v;
  if (sum > 0.0) {
    for (double& v : out) v /= sum;
  }
  return out;
}

}  // namespace xbf
