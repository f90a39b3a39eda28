#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "manifest.hpp"
#include "xbf/bandit_io.hpp"
#include "xbf/logging_sim.hpp"
#include "xbf/metrics.hpp"
#include "xbf/oracle.hpp"
#include "xbf/rng.hpp"
#include "xbf/trainer.hpp"
#include "xbf/types.hpp"
#include "xbf/xmc_data.hpp"

namespace xbf::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class ManifestWriter {
 public:
  ManifestWriter(const Invocation& inv, std::uint64_t seed) {
    m_.command = inv.command;
    m_.config = inv.config;
    m_.seed = seed;
    m_.tool_version = XBF_VERSION;
  }

  void input(const std::string& name, const std::string& path) {
    if (!path.empty()) m_.inputs[name] = fmt::format("{:016x}", fnv1a64_file(path));
  }

  void write(const fs::path& dir) const { write_text(dir / "manifest.json", m_.to_json()); }

 private:
  RunManifest m_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(fmt::format("{} is required", flag));
}

std::string summary_json(const DatasetSummary& s) {
  json j;
  j["n"] = s.n;
  j["d"] = s.d;
  j["l_total"] = s.l_total;
  j["empty_label_sets"] = s.empty_label_sets;
  j["used_labels"] = s.used_labels;
  j["mean_labels_per_instance"] = s.mean_labels_per_instance;
  j["mean_instances_per_label"] = s.mean_instances_per_label;
  j["mean_nnz"] = s.mean_nnz;
  return j.dump(2);
}

void check_model_shape(const PolicyModel& model, const Dataset& ds, const std::string& what) {
  if (model.num_labels() != ds.l_total() || model.num_features() != ds.d()) {
    throw ConfigError(fmt::format("{} has shape {}x{} but the dataset has L={} D={}", what, model.num_labels(),
                                  model.num_features(), ds.l_total(), ds.d()));
  }
}

}  // namespace

int cmd_simulate_log(const SimulateLogOptions& opt, const Invocation& inv) {
  LoggingConfig cfg;
  cfg.alpha = opt.alpha;
  cfg.beta = opt.beta;
  cfg.temperature = opt.temperature;
  cfg.top_m = opt.top_m;
  cfg.ell = opt.ell;
  cfg.seed = opt.seed;
  cfg.validate();
  if (opt.base_lr <= 0.0) throw ConfigError("--base-lr must be positive");
  const fs::path dir = opt.out;
  prepare_output_dir(dir, opt.force);

  const Dataset train = parse_dataset(opt.data);
  const auto part = split_fraction(train, cfg.alpha, cfg.seed).first;
  const PolicyModel base = fit_base_policy(part, opt.base_epochs, opt.base_lr, cfg.seed);
  const LoggingTable table = build_logging_table(base, train, cfg);
  const auto log = generate_bandit_log(table, train, cfg);
  const LoggingStats stats = logging_stats(log, table, train);

  ManifestWriter manifest(inv, opt.seed);
  manifest.input("data", opt.data);
  save_checkpoint(base, dir / "base_model.ckpt");
  write_logging_table(table, dir / "logging_table.jsonl");
  write_bandit_log(log, dir / "bandit_log.jsonl");
  write_text(dir / "logging_stats.json", logging_stats_json(stats));
  if (!opt.test_data.empty()) {
    const Dataset test = parse_dataset(opt.test_data);
    if (test.l_total() != train.l_total() || test.d() != train.d()) {
      throw ConfigError("--test-data must have the same label and feature spaces as --data");
    }
    const auto counts = label_frequencies(train);
    write_logging_table(build_logging_table(base, test, cfg, counts), dir / "test_logging_table.jsonl");
    manifest.input("test-data", opt.test_data);
  }
  manifest.write(dir);

  auto& out = *inv.out;
  out << fmt::format("records\t{}\n", log.size());
  out << fmt::format("expected_reward_at_{}\t{:.6f}\n", stats.ell, stats.expected_reward_at_ell);
  out << fmt::format("padded_instances\t{}\n", stats.padded_instances.size());
  return 0;
}

int cmd_train(const TrainOptions& opt, const Invocation& inv) {
  TrainConfig cfg;
  cfg.mode = parse_train_mode(opt.mode);
  cfg.p_grid = opt.p_grid;
  cfg.lambda_grid = opt.lambda_grid;
  cfg.epochs = opt.epochs;
  cfg.lr = opt.lr;
  cfg.direct_lr = opt.direct_lr;
  cfg.batch_size = opt.batch_size;
  cfg.seed = opt.seed;
  if (opt.negative_samples > 0) cfg.negative_samples = opt.negative_samples;
  cfg.full_softmax_threshold = opt.full_softmax_threshold;
  cfg.momentum = opt.momentum;
  cfg.holdout_fraction = opt.holdout;
  cfg.validate();
  const bool needs_table = cfg.mode == TrainMode::kPoxm || cfg.mode == TrainMode::kPmBanditNet;
  if (needs_table) require(opt.logging_table, "--logging-table");
  if (opt.wpoxm && cfg.mode != TrainMode::kPoxm) throw ConfigError("--wpoxm requires --mode poxm");
  const fs::path dir = opt.out;
  prepare_output_dir(dir, opt.force);

  const Dataset ds = parse_dataset(opt.data);
  const auto log = read_bandit_log(opt.log);
  std::optional<LoggingTable> table;
  if (!opt.logging_table.empty()) table = read_logging_table(opt.logging_table, ds.l_total());
  std::optional<PolicyModel> init;
  if (!opt.init.empty()) {
    init = load_checkpoint(opt.init);
    check_model_shape(*init, ds, "--init");
  }
  if (opt.wpoxm) {
    cfg.propensity_weights = fit_propensities(label_frequencies(ds), ds.n(), opt.prop_a, opt.prop_b).p;
  }

  const TrainResult result = train(log, ds, table ? &*table : nullptr, cfg, init ? &*init : nullptr);

  ManifestWriter manifest(inv, opt.seed);
  manifest.input("data", opt.data);
  manifest.input("log", opt.log);
  manifest.input("logging-table", opt.logging_table);
  manifest.input("init", opt.init);
  save_checkpoint(result.model, dir / "model.ckpt");
  write_text(dir / "train_result.json", train_result_json(result, cfg));
  manifest.write(dir);

  auto& out = *inv.out;
  out << fmt::format("mode\t{}\n", to_string(result.mode));
  out << fmt::format("chosen_p\t{}\nchosen_lambda\t{}\n", result.chosen_p, result.chosen_lambda);
  if (!result.snis_curve.empty()) {
    out << "p\tlambda\tsnis\tfinal_objective\n";
    for (const auto& g : result.snis_curve) {
      out << fmt::format("{}\t{}\t{:.6f}\t{:.6f}\n", g.p, g.lambda, g.snis, g.final_objective);
    }
  }
  return 0;
}

int cmd_evaluate(const EvaluateOptions& opt, const Invocation& inv) {
  if (opt.model.empty() == opt.logging_table.empty()) {
    throw ConfigError("exactly one of --model and --logging-table is required");
  }
  if (!opt.selector_table.empty() && opt.p == 0) throw ConfigError("--selector-table requires --p > 0");
  if (opt.selector_table.empty() && opt.p > 0) throw ConfigError("--p requires --selector-table");
  if (!opt.logging_table.empty() && (opt.greedy || !opt.selector_table.empty())) {
    throw ConfigError("--greedy and --selector-table apply to --model only");
  }
  EvalConfig cfg;
  cfg.ks = opt.k;
  cfg.n_samples = opt.samples;
  cfg.seed = opt.seed;
  const fs::path dir = opt.out;
  prepare_output_dir(dir, opt.force);

  const Dataset test = parse_dataset(opt.data);
  std::optional<PolicyModel> model;
  std::optional<LoggingTable> policy_table;
  std::optional<LoggingTable> selector_table;
  std::optional<ActionSelector> selector;
  std::unique_ptr<RankingPolicy> ranker;
  if (!opt.model.empty()) {
    model = load_checkpoint(opt.model);
    check_model_shape(*model, test, "--model");
    if (!opt.selector_table.empty()) {
      selector_table = read_logging_table(opt.selector_table, test.l_total());
      if (selector_table->size() != test.n()) throw ConfigError("--selector-table does not match --data");
      selector = top_p_selector(*selector_table, opt.p);
    }
    const ActionSelector* sel = selector ? &*selector : nullptr;
    if (opt.greedy) {
      ranker = std::make_unique<TopKRanker>(*model, test, sel);
    } else {
      ranker = std::make_unique<SoftmaxRanker>(*model, test, sel);
    }
  } else {
    policy_table = read_logging_table(opt.logging_table, test.l_total());
    if (policy_table->size() != test.n()) throw ConfigError("--logging-table does not match --data");
    ranker = std::make_unique<TableRanker>(*policy_table);
  }

  const Dataset prop_ds = opt.propensity_data.empty() ? Dataset{} : parse_dataset(opt.propensity_data);
  const Dataset& prop_source = opt.propensity_data.empty() ? test : prop_ds;
  if (prop_source.l_total() != test.l_total()) throw ConfigError("--propensity-data has a different label space");
  const PropensityModel prop = fit_propensities(label_frequencies(prop_source), prop_source.n(), opt.prop_a, opt.prop_b);

  const MetricReport report = evaluate(*ranker, test, &prop, cfg);

  ManifestWriter manifest(inv, opt.seed);
  manifest.input("data", opt.data);
  manifest.input("model", opt.model);
  manifest.input("logging-table", opt.logging_table);
  manifest.input("selector-table", opt.selector_table);
  manifest.input("propensity-data", opt.propensity_data);
  write_text(dir / "metrics.json", report.to_json());
  manifest.write(dir);

  *inv.out << report.table_header() << "\n" << report.table_row() << "\n";
  return 0;
}

int cmd_verify_theorem(const VerifyTheoremOptions& opt, const Invocation& inv) {
  if (opt.env.empty() && opt.trials == 0) throw ConfigError("--trials must be positive");
  if (opt.n == 0) throw ConfigError("--n must be positive");
  std::optional<fs::path> dir;
  if (!opt.out.empty()) {
    dir = opt.out;
    prepare_output_dir(*dir, opt.force);
  }

  std::vector<oracle::Trial> trials;
  if (!opt.env.empty()) {
    trials.push_back(oracle::trial_from_json(read_text(opt.env)));
  } else {
    trials.reserve(opt.trials);
    for (std::size_t t = 0; t < opt.trials; ++t) {
      Rng rng(derive_seed(opt.seed, t));
      trials.push_back(oracle::random_trial(rng));
    }
  }

  std::ostringstream lines;
  std::size_t violations = 0;
  std::size_t bias_violations = 0;
  std::size_t mse_violations = 0;
  std::size_t second_moment_violations = 0;
  double min_bias_slack = std::numeric_limits<double>::infinity();
  double min_mse_slack = min_bias_slack;
  double min_second_moment_slack = min_bias_slack;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& tr = trials[t];
    const auto report = oracle::check_theorem1(tr.pi, tr.rho, tr.phi, tr.env, opt.n);
    bias_violations += report.bias_bound_holds ? 0 : 1;
    mse_violations += report.mse_bound_holds ? 0 : 1;
    second_moment_violations += report.second_moment_holds ? 0 : 1;
    if (!report.holds()) ++violations;
    min_bias_slack = std::min(min_bias_slack, report.bias_slack);
    min_mse_slack = std::min(min_mse_slack, report.mse_slack);
    min_second_moment_slack = std::min(min_second_moment_slack, report.second_moment_slack);
    lines << fmt::format("{{\"trial\":{},\"holds\":{},\"report\":{}}}\n", t, report.holds() ? "true" : "false",
                         json::parse(oracle::to_json(report)).dump());
  }

  json summary;
  summary["trials"] = trials.size();
  summary["seed"] = opt.seed;
  summary["n"] = opt.n;
  summary["violations"] = violations;
  summary["bias_violations"] = bias_violations;
  summary["mse_violations"] = mse_violations;
  summary["second_moment_violations"] = second_moment_violations;
  summary["min_bias_slack"] = min_bias_slack;
  summary["min_mse_slack"] = min_mse_slack;
  summary["min_second_moment_slack"] = min_second_moment_slack;
  summary["pass"] = violations == 0;

  if (dir) {
    ManifestWriter manifest(inv, opt.seed);
    manifest.input("env", opt.env);
    write_text(*dir / "trials.jsonl", lines.str());
    write_text(*dir / "summary.json", summary.dump(2) + "\n");
    manifest.write(*dir);
  } else {
    *inv.out << lines.str();
  }
  *inv.out << summary.dump() << "\n";
  return violations == 0 ? 0 : 6;
}

int cmd_convert(const ConvertOptions& opt, const Invocation& inv) {
  const fs::path dir = opt.out;
  prepare_output_dir(dir, opt.force);
  const Dataset ds = parse_dataset(opt.data);
  write_dataset(ds, dir / "dataset.txt");
  ManifestWriter manifest(inv, 0);
  manifest.input("data", opt.data);
  manifest.write(dir);
  *inv.out << fmt::format("wrote {} instances\n", ds.n());
  return 0;
}

int cmd_stats(const StatsOptions& opt, const Invocation& inv) {
  if (opt.log.empty() != opt.logging_table.empty()) {
    throw ConfigError("--log and --logging-table must be given together");
  }
  std::optional<fs::path> dir;
  if (!opt.out.empty()) {
    dir = opt.out;
    prepare_output_dir(*dir, opt.force);
  }
  const Dataset ds = parse_dataset(opt.data);
  json j;
  j["dataset"] = json::parse(summary_json(summarize(ds)));
  if (!opt.log.empty()) {
    const auto log = read_bandit_log(opt.log);
    const auto table = read_logging_table(opt.logging_table, ds.l_total());
    if (table.size() != ds.n()) throw ConfigError("--logging-table does not match --data");
    j["logging"] = json::parse(logging_stats_json(logging_stats(log, table, ds)));
  }
  const std::string text = j.dump(2) + "\n";
  if (dir) {
    ManifestWriter manifest(inv, 0);
    manifest.input("data", opt.data);
    manifest.input("log", opt.log);
    manifest.input("logging-table", opt.logging_table);
    write_text(*dir / "stats.json", text);
    manifest.write(*dir);
  }
  *inv.out << text;
  return 0;
}

}  // namespace xbf::cli
