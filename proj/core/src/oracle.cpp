#include "xbf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace xbf::oracle {

namespace {

constexpr double kSumTolerance = 1e-9;

bool in_set(const std::vector<LabelId>& set, LabelId y) { return std::binary_search(set.begin(), set.end(), y); }

void check_set_table(const SetTable& sets, std::size_t contexts, std::size_t labels, const char* name) {
  if (sets.size() != contexts) throw ConfigError(fmt::format("{} has {} rows for {} contexts", name, sets.size(), contexts));
  for (std::size_t x = 0; x < sets.size(); ++x) {
    for (std::size_t k = 0; k < sets[x].size(); ++k) {
      if (sets[x][k] >= labels) throw ConfigError(fmt::format("{}({}) contains label {} >= L", name, x, sets[x][k]));
      if (k > 0 && sets[x][k] <= sets[x][k - 1]) {
        throw ConfigError(fmt::format("{}({}) is not sorted and duplicate-free", name, x));
      }
    }
  }
}

void check_policy_table(const PolicyTable& t, const ToyEnvironment& env, const char* name) {
  if (t.size() != env.num_contexts()) {
    throw ConfigError(fmt::format("{} has {} rows for {} contexts", name, t.size(), env.num_contexts()));
  }
  for (std::size_t x = 0; x < t.size(); ++x) {
    if (t[x].size() != env.num_labels) throw ConfigError(fmt::format("{}({}) has {} entries", name, x, t[x].size()));
    double sum = 0.0;
    for (std::size_t y = 0; y < t[x].size(); ++y) {
      if (!(t[x][y] >= 0.0) || !std::isfinite(t[x][y])) {
        throw AssumptionViolation(fmt::format("{}(y={} | x={}) = {} is not a probability", name, y, x, t[x][y]));
      }
      sum += t[x][y];
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw AssumptionViolation(fmt::format("{}(. | x={}) sums to {}", name, x, sum));
    }
  }
}

std::size_t ordered_slates(std::size_t labels, std::size_t ell) {
  std::size_t count = 1;
  for (std::size_t j = 0; j < ell; ++j) count *= labels - j;
  return count;
}

struct Enumerator {
  const std::vector<double>& pi;
  const std::vector<double>& delta;
  std::size_t ell;
  std::vector<char> used;

  double remaining() const {
    double r = 0.0;
    for (std::size_t y = 0; y < pi.size(); ++y) {
      if (!used[y]) r += pi[y];
    }
    return r;
  }

  // Sum over full ordered slates of P(slate) * total reward.
  double joint(std::size_t depth, double prob, double reward) {
    if (depth == ell) return prob * reward;
    const double rem = remaining();
    double total = 0.0;
    for (std::size_t y = 0; y < pi.size(); ++y) {
      if (used[y] || pi[y] <= 0.0) continue;
      if (!(rem > 0.0)) throw std::domain_error("policy has no mass left for the slate");
      used[y] = 1;
      total += joint(depth + 1, prob * (pi[y] / rem), reward + delta[y]);
      used[y] = 0;
    }
    return total;
  }

  // Sum over positions of E[delta at that position], recursing over prefixes.
  double per_position(std::size_t depth, double prob) {
    const double rem = remaining();
    if (!(rem > 0.0)) throw std::domain_error("policy has no mass left for the slate");
    double expected = 0.0;
    for (std::size_t y = 0; y < pi.size(); ++y) {
      if (!used[y]) expected += pi[y] / rem * delta[y];
    }
    double total = prob * expected;
    if (depth + 1 == ell) return total;
    for (std::size_t y = 0; y < pi.size(); ++y) {
      if (used[y] || pi[y] <= 0.0) continue;
      used[y] = 1;
      total += per_position(depth + 1, prob * (pi[y] / rem));
      used[y] = 0;
    }
    return total;
  }
};

}  // namespace

std::vector<std::pair<double, double>> ToyEnvironment::reward_outcomes(std::size_t x, LabelId y) const {
  const double d = delta[x][y];
  if (family == RewardFamily::kDeterministic) return {{d, 1.0}};
  const double q = d / delta_max;
  return {{delta_max, q}, {0.0, 1.0 - q}};
}

double ToyEnvironment::second_moment(std::size_t x, LabelId y) const {
  double m = 0.0;
  for (const auto& [r, p] : reward_outcomes(x, y)) m += p * r * r;
  return m;
}

void ToyEnvironment::finalize() {
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < num_contexts(); ++x) {
    for (std::size_t y = 0; y < num_labels; ++y) s = std::min(s, second_moment(x, static_cast<LabelId>(y)));
  }
  sigma_sq = std::isfinite(s) ? s : 0.0;
}

void ToyEnvironment::validate() const {
  if (context_probs.empty() || context_probs.size() > kMaxContexts) {
    throw ConfigError(fmt::format("context count {} outside [1, {}]", context_probs.size(), kMaxContexts));
  }
  if (num_labels == 0 || num_labels > kMaxLabels) {
    throw ConfigError(fmt::format("label count {} outside [1, {}]", num_labels, kMaxLabels));
  }
  if (!(delta_max > 0.0) || !std::isfinite(delta_max)) throw ConfigError("delta_max must be positive");
  if (delta.size() != num_contexts()) throw ConfigError("delta needs one row per context");
  check_set_table(psi, num_contexts(), num_labels, "psi");
  double total = 0.0;
  for (std::size_t x = 0; x < num_contexts(); ++x) {
    if (!(context_probs[x] >= 0.0)) throw AssumptionViolation(fmt::format("P(x={}) is negative", x));
    total += context_probs[x];
    if (delta[x].size() != num_labels) throw ConfigError(fmt::format("delta row {} has the wrong length", x));
    for (std::size_t y = 0; y < num_labels; ++y) {
      const double d = delta[x][y];
      if (!(d >= 0.0 && d <= delta_max)) {
        throw AssumptionViolation(fmt::format("delta(x={}, y={}) = {} outside [0, {}]", x, y, d, delta_max));
      }
      if (d > 0.0 && !in_set(psi[x], static_cast<LabelId>(y))) {
        throw AssumptionViolation(fmt::format("delta(x={}, y={}) = {} > 0 but y is outside psi(x)", x, y, d));
      }
    }
  }
  if (std::abs(total - 1.0) > kSumTolerance) throw AssumptionViolation(fmt::format("context probabilities sum to {}", total));
  ToyEnvironment copy = *this;
  copy.finalize();
  if (std::abs(copy.sigma_sq - sigma_sq) > 1e-12) {
    throw AssumptionViolation(fmt::format("sigma_sq = {} but the reward family gives {}", sigma_sq, copy.sigma_sq));
  }
}

ValueRoutes exact_value_routes(const PolicyTable& pi, const ToyEnvironment& env, std::size_t ell) {
  env.validate();
  check_policy_table(pi, env, "pi");
  if (ell == 0 || ell > kMaxSlate || ell > env.num_labels) {
    throw ConfigError(fmt::format("slate size {} outside [1, min({}, L)]", ell, kMaxSlate));
  }
  if (env.num_contexts() * ordered_slates(env.num_labels, ell) > kEnumerationBudget) {
    throw ConfigError("enumeration budget exceeded");
  }
  ValueRoutes out;
  for (std::size_t x = 0; x < env.num_contexts(); ++x) {
    Enumerator e{pi[x], env.delta[x], ell, std::vector<char>(env.num_labels, 0)};
    out.joint += env.context_probs[x] * e.joint(0, 1.0, 0.0);
    out.per_position += env.context_probs[x] * e.per_position(0, 1.0);
  }
  return out;
}

double exact_value(const PolicyTable& pi, const ToyEnvironment& env, std::size_t ell) {
  const auto routes = exact_value_routes(pi, env, ell);
  if (std::abs(routes.joint - routes.per_position) > 1e-12) {
    throw std::logic_error(fmt::format("value routes disagree: {} vs {}", routes.joint, routes.per_position));
  }
  return routes.joint;
}

Moments exact_estimator_moments(EstimatorKind kind, const PolicyTable& pi, const PolicyTable& rho,
                                const SetTable& phi, const ToyEnvironment& env, std::size_t n) {
  if (n == 0) throw ConfigError("sample count must be positive");
  env.validate();
  check_policy_table(pi, env, "pi");
  check_policy_table(rho, env, "rho");
  check_set_table(phi, env.num_contexts(), env.num_labels, "phi");
  for (std::size_t x = 0; x < env.num_contexts(); ++x) {
    for (const auto y : env.psi[x]) {
      if (pi[x][y] > 0.0 && !(rho[x][y] > 0.0)) {
        throw AssumptionViolation(fmt::format("psi-overlap fails: pi(y={} | x={}) > 0 but rho = 0", y, x));
      }
    }
    for (const auto y : phi[x]) {
      if (!(rho[x][y] > 0.0)) throw AssumptionViolation(fmt::format("phi(x={}) contains y={} outside supp rho", x, y));
    }
  }

  Moments m;
  m.value = exact_value(pi, env, 1);
  for (std::size_t x = 0; x < env.num_contexts(); ++x) {
    double phi_mass = 0.0;
    for (const auto y : phi[x]) phi_mass += pi[x][y];
    for (std::size_t y = 0; y < env.num_labels; ++y) {
      const double r_prob = rho[x][y];
      if (r_prob <= 0.0) continue;
      const auto label = static_cast<LabelId>(y);
      double factor = 0.0;
      switch (kind) {
        case EstimatorKind::kIs: factor = pi[x][y] / r_prob; break;
        case EstimatorKind::kSis: factor = in_set(phi[x], label) ? pi[x][y] / r_prob : 0.0; break;
        case EstimatorKind::kSisRestricted:
          factor = in_set(phi[x], label) && phi_mass > 0.0 ? pi[x][y] / phi_mass / r_prob : 0.0;
          break;
      }
      for (const auto& [r, p] : env.reward_outcomes(x, label)) {
        const double prob = env.context_probs[x] * r_prob * p;
        const double est = factor * r;
        m.mean += prob * est;
        m.second_moment += prob * est * est;
      }
    }
  }
  const double nn = static_cast<double>(n);
  m.bias = m.mean - m.value;
  m.variance = std::max(0.0, m.second_moment - m.mean * m.mean) / nn;
  m.mse = m.bias * m.bias + m.variance;
  m.mean_square = m.variance + m.mean * m.mean;
  return m;
}

double kappa(const PolicyTable& pi, const SetTable& psi, const SetTable& phi, const ToyEnvironment& env) {
  check_policy_table(pi, env, "pi");
  check_set_table(psi, env.num_contexts(), env.num_labels, "psi");
  check_set_table(phi, env.num_contexts(), env.num_labels, "phi");
  double k = 0.0;
  for (std::size_t x = 0; x < env.num_contexts(); ++x) {
    double mass = 0.0;
    for (const auto y : psi[x]) {
      if (!in_set(phi[x], y)) mass += pi[x][y];
    }
    k += env.context_probs[x] * mass;
  }
  return k;
}

Theorem1Report check_theorem1(const PolicyTable& pi, const PolicyTable& rho, const SetTable& phi,
                              const ToyEnvironment& env, std::size_t n, double tol) {
  Theorem1Report r;
  r.is = exact_estimator_moments(EstimatorKind::kIs, pi, rho, phi, env, n);
  r.sis = exact_estimator_moments(EstimatorKind::kSis, pi, rho, phi, env, n);
  r.value = r.is.value;
  r.kappa = kappa(pi, env.psi, phi, env);
  const double d = env.delta_max;
  double ratio = 0.0;
  for (std::size_t x = 0; x < env.num_contexts(); ++x) {
    double pi_a = 0.0;
    double rho_a = 0.0;
    for (std::size_t y = 0; y < env.num_labels; ++y) {
      if (in_set(phi[x], static_cast<LabelId>(y)) || !(rho[x][y] > 0.0)) continue;
      pi_a += pi[x][y];
      rho_a += rho[x][y];
    }
    if (rho_a > 0.0) ratio += env.context_probs[x] * pi_a * pi_a / rho_a;
  }
  r.correction = env.sigma_sq / static_cast<double>(n) * ratio;
  r.bias_bound = d * r.kappa;
  r.bias_slack = r.bias_bound - std::abs(r.sis.bias);
  r.mse_bound = r.is.mse + 2.0 * d * d * r.kappa - r.correction;
  r.mse_slack = r.mse_bound - r.sis.mse;
  r.second_moment_slack = r.is.mean_square - r.sis.mean_square - r.correction;
  r.bias_bound_holds = r.bias_slack >= -tol;
  r.mse_bound_holds = r.mse_slack >= -tol;
  r.second_moment_holds = r.second_moment_slack >= -tol;
  return r;
}

Trial random_trial(Rng& rng) {
  Trial t;
  ToyEnvironment& env = t.env;
  const std::size_t contexts = 1 + static_cast<std::size_t>(rng.below(kMaxContexts));
  env.num_labels = 2 + static_cast<std::size_t>(rng.below(kMaxLabels - 1));
  const std::size_t labels = env.num_labels;
  env.family = rng.uniform() < 0.5 ? RewardFamily::kBernoulli : RewardFamily::kDeterministic;
  env.delta_max = 0.5 + 1.5 * rng.uniform();
  double total = 0.0;
  for (std::size_t x = 0; x < contexts; ++x) {
    env.context_probs.push_back(rng.uniform_open());
    total += env.context_probs.back();
  }
  for (auto& p : env.context_probs) p /= total;

  auto normalize = [](std::vector<double>& w) {
    double s = 0.0;
    for (const double v : w) s += v;
    for (auto& v : w) v /= s;
  };

  for (std::size_t x = 0; x < contexts; ++x) {
    std::vector<LabelId> psi;
    const bool all_relevant = rng.uniform() < 0.25;
    for (std::size_t y = 0; y < labels; ++y) {
      if (all_relevant || rng.uniform() < 0.4) psi.push_back(static_cast<LabelId>(y));
    }
    if (psi.empty()) psi.push_back(static_cast<LabelId>(rng.below(labels)));
    std::vector<double> delta(labels, 0.0);
    for (const auto y : psi) delta[y] = env.delta_max * (0.05 + 0.95 * rng.uniform());
    env.psi.push_back(psi);
    env.delta.push_back(delta);

    std::vector<double> rho(labels, 0.0);
    const bool full_support = rng.uniform() < 0.2;
    for (std::size_t y = 0; y < labels; ++y) {
      if (full_support || in_set(psi, static_cast<LabelId>(y)) || rng.uniform() < 0.5) {
        rho[y] = 0.05 + rng.uniform();
      }
    }
    normalize(rho);
    std::vector<LabelId> support;
    for (std::size_t y = 0; y < labels; ++y) {
      if (rho[y] > 0.0) support.push_back(static_cast<LabelId>(y));
    }

    std::vector<LabelId> phi;
    const double kind = rng.uniform();
    for (const auto y : support) {
      if (kind < 0.2) {
        if (in_set(psi, y) || rng.uniform() < 0.5) phi.push_back(y);
      } else if (kind < 0.3) {
        // empty selector
      } else if (kind < 0.5) {
        phi.push_back(y);
      } else if (rng.uniform() < 0.5) {
        phi.push_back(y);
      }
    }
    t.phi.push_back(phi);
    t.rho.push_back(rho);

    std::vector<double> pi(labels, 0.0);
    const double shape = rng.uniform();
    for (std::size_t y = 0; y < labels; ++y) {
      const double u = rng.uniform_open();
      if (shape < 0.3 && rng.uniform() < 0.5) continue;
      if (shape >= 0.3 && shape < 0.45 && !phi.empty() && !in_set(phi, static_cast<LabelId>(y))) continue;
      pi[y] = u * u * u + 1e-3;
    }
    bool any = false;
    for (const double v : pi) any = any || v > 0.0;
    if (!any) pi[rng.below(labels)] = 1.0;
    normalize(pi);
    t.pi.push_back(pi);
  }
  env.finalize();
  return t;
}

namespace {

nlohmann::ordered_json set_table_json(const SetTable& t) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& row : t) j.push_back(row);
  return j;
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(fmt::format("environment JSON is missing '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("environment JSON field '{}': {}", key, e.what()));
  }
}

}  // namespace

std::string to_json(const Trial& trial) {
  nlohmann::ordered_json j;
  j["context_probs"] = trial.env.context_probs;
  j["num_labels"] = trial.env.num_labels;
  j["delta"] = trial.env.delta;
  j["family"] = trial.env.family == RewardFamily::kBernoulli ? "bernoulli" : "deterministic";
  j["psi"] = set_table_json(trial.env.psi);
  j["delta_max"] = trial.env.delta_max;
  j["sigma_sq"] = trial.env.sigma_sq;
  j["pi"] = trial.pi;
  j["rho"] = trial.rho;
  j["phi"] = set_table_json(trial.phi);
  return j.dump();
}

Trial trial_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("environment JSON: {}", e.what()), 0);
  }
  if (!j.is_object()) throw ParseError("environment JSON must be an object", 0);
  Trial t;
  t.env.context_probs = required<std::vector<double>>(j, "context_probs");
  t.env.num_labels = required<std::size_t>(j, "num_labels");
  t.env.delta = required<std::vector<std::vector<double>>>(j, "delta");
  const auto family = j.contains("family") ? j.at("family").get<std::string>() : std::string("bernoulli");
  if (family == "bernoulli") {
    t.env.family = RewardFamily::kBernoulli;
  } else if (family == "deterministic") {
    t.env.family = RewardFamily::kDeterministic;
  } else {
    throw ConfigError(fmt::format("unknown reward family '{}'", family));
  }
  t.env.psi = required<SetTable>(j, "psi");
  t.env.delta_max = required<double>(j, "delta_max");
  t.pi = required<PolicyTable>(j, "pi");
  t.rho = required<PolicyTable>(j, "rho");
  t.phi = required<SetTable>(j, "phi");
  for (auto* sets : {&t.env.psi, &t.phi}) {
    for (auto& row : *sets) std::sort(row.begin(), row.end());
  }
  if (j.contains("sigma_sq")) {
    t.env.sigma_sq = j.at("sigma_sq").get<double>();
  } else if (t.env.delta.size() == t.env.context_probs.size()) {
    bool shaped = true;
    for (const auto& row : t.env.delta) shaped = shaped && row.size() == t.env.num_labels;
    if (shaped) t.env.finalize();
  }
  return t;
}

std::string to_json(const Theorem1Report& r) {
  nlohmann::ordered_json j;
  j["value"] = r.value;
  j["kappa"] = r.kappa;
  j["is_mse"] = r.is.mse;
  j["sis_mse"] = r.sis.mse;
  j["sis_bias"] = r.sis.bias;
  j["bias_bound"] = r.bias_bound;
  j["bias_slack"] = r.bias_slack;
  j["correction"] = r.correction;
  j["mse_bound"] = r.mse_bound;
  j["mse_slack"] = r.mse_slack;
  j["second_moment_slack"] = r.second_moment_slack;
  j["bias_bound_holds"] = r.bias_bound_holds;
  j["mse_bound_holds"] = r.mse_bound_holds;
  j["second_moment_holds"] = r.second_moment_holds;
  return j.dump();
}

std::vector<double> ContextTablePolicy::restricted_probs(std::size_t instance, std::span<const LabelId> allowed) const {
  const auto& row = table_.at(context_of_.at(instance));
  std::vector<double> out(allowed.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < allowed.size(); ++k) {
    out[k] = row.at(allowed[k]);
    sum += out[k];
  }
  if (sum > 0.0) {
    for (auto& v : out) v /= sum;
  } else {
    std::fill(out.begin(), out.end(), 0.0);
  }
  return out;
}

}  // namespace xbf::oracle
