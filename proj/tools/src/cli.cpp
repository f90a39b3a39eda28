#include "xbf_cli/cli.hpp"

#include <functional>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "manifest.hpp"
#include "xbf/oracle.hpp"
#include "xbf/parallel.hpp"
#include "xbf/types.hpp"

namespace xbf::cli {
namespace {

template <typename T>
std::string value_string(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    return fmt::format("{}", v);
  }
}

template <typename T>
std::string value_string(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + value_string(v[i]);
  return s;
}

/// Binds options of one subcommand and records their resolved values.
class Binder {
 public:
  Binder(CLI::App& app, std::string name, std::string description)
      : name_(std::move(name)), sub_(app.add_subcommand(name_, std::move(description))) {}

  template <typename T>
  CLI::Option* option(const std::string& flag, T& var, const std::string& description) {
    recorded_.emplace_back(flag, [&var] { return value_string(var); });
    auto* opt = sub_->add_option("--" + flag, var, description)->capture_default_str();
    if constexpr (!std::is_same_v<T, std::string> && std::is_class_v<T>) opt->delimiter(',');
    return opt;
  }

  CLI::Option* flag(const std::string& flag, bool& var, const std::string& description) {
    recorded_.emplace_back(flag, [&var] { return value_string(var); });
    return sub_->add_flag("--" + flag, var, description);
  }

  /// Output options are not part of the resolved configuration.
  void output(std::string& out, bool& force) {
    sub_->add_option("--out", out, "Output directory");
    sub_->add_flag("--force", force, "Allow a nonempty output directory");
  }

  [[nodiscard]] CLI::App* app() const { return sub_; }
  [[nodiscard]] const std::string& name() const { return name_; }

  [[nodiscard]] std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> m;
    for (const auto& [k, f] : recorded_) m[k] = f();
    return m;
  }

 private:
  std::string name_;
  CLI::App* sub_;
  std::vector<std::pair<std::string, std::function<std::string()>>> recorded_;
};

struct RerunOptions {
  std::string manifest;
  std::string out;
  bool force = false;
};

int rerun(const RerunOptions& opt, std::size_t threads, std::ostream& out, std::ostream& err) {
  const RunManifest m = RunManifest::from_json(read_text(opt.manifest));
  if (m.command == "rerun") throw ConfigError("manifest names the rerun command");
  if (m.tool_version != XBF_VERSION) {
    err << fmt::format("warning: manifest was written by version {}, this is {}\n", m.tool_version, XBF_VERSION);
  }
  for (const auto& [name, digest] : m.inputs) {
    const auto it = m.config.find(name);
    if (it == m.config.end()) throw ConfigError(fmt::format("manifest input {} has no path", name));
    const std::string now = fmt::format("{:016x}", fnv1a64_file(it->second));
    if (now != digest) {
      throw ConfigError(fmt::format("input {} ({}) changed: digest {} but manifest has {}", name, it->second, now,
                                    digest));
    }
  }
  std::vector<std::string> args{"xbf", "--threads", std::to_string(threads), m.command};
  for (const auto& [k, v] : m.config) {
    if (v == "false" || v.empty()) continue;
    args.push_back(v == "true" ? "--" + k : "--" + k + "=" + v);
  }
  if (!opt.out.empty()) args.insert(args.end(), {"--out", opt.out});
  if (opt.force) args.emplace_back("--force");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Off-policy learning for extreme multi-label classification from bandit feedback", "xbf"};
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags take precedence");
  app.set_version_flag("--version", XBF_VERSION);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Maximum worker threads (0 uses all hardware threads)");
  app.require_subcommand(1);

  SimulateLogOptions sim;
  Binder sim_b(app, "simulate-log", "Fit a base policy and simulate a logged bandit dataset");
  sim_b.option("data", sim.data, "Training dataset");
  sim_b.option("test-data", sim.test_data, "Test dataset; also writes its logging table");
  sim_b.option("alpha", sim.alpha, "Fraction of the training set used for the base policy");
  sim_b.option("beta", sim.beta, "Scale of the Gumbel perturbation");
  sim_b.option("temperature", sim.temperature, "Softmax temperature of the logging policy");
  sim_b.option("top-m", sim.top_m, "Truncation of the logging support");
  sim_b.option("ell", sim.ell, "Slate size");
  sim_b.option("seed", sim.seed, "Random seed");
  sim_b.option("base-epochs", sim.base_epochs, "Epochs of base-policy training");
  sim_b.option("base-lr", sim.base_lr, "Step size of base-policy training");
  sim_b.output(sim.out, sim.force);

  TrainOptions tr;
  Binder tr_b(app, "train", "Learn a policy from logged bandit feedback");
  tr_b.option("data", tr.data, "Training dataset the log was drawn from");
  tr_b.option("log", tr.log, "Bandit log");
  tr_b.option("logging-table", tr.logging_table, "Logging policy table (poxm, pm-banditnet)");
  tr_b.option("init", tr.init, "Warm-start checkpoint");
  tr_b.option("mode", tr.mode, "poxm | banditnet | pm-banditnet | direct")
      ->check(CLI::IsMember({"poxm", "banditnet", "pm-banditnet", "direct"}));
  tr_b.option("p-grid", tr.p_grid, "Selector sizes");
  tr_b.option("lambda-grid", tr.lambda_grid, "Translation constants");
  tr_b.option("epochs", tr.epochs, "Epochs per grid point");
  tr_b.option("lr", tr.lr, "Step size for the importance-sampling modes");
  tr_b.option("direct-lr", tr.direct_lr, "Step size for the Direct Method");
  tr_b.option("batch-size", tr.batch_size, "Mini-batch size");
  tr_b.option("seed", tr.seed, "Random seed");
  tr_b.option("negative-samples", tr.negative_samples, "Sampled negatives above the threshold (0 = default)");
  tr_b.option("full-softmax-threshold", tr.full_softmax_threshold, "Label count above which negatives are sampled");
  tr_b.option("momentum", tr.momentum, "Momentum coefficient");
  tr_b.option("holdout", tr.holdout, "Fraction of the log held out for model selection");
  tr_b.flag("wpoxm", tr.wpoxm, "Divide importance weights by label propensities");
  tr_b.option("prop-a", tr.prop_a, "Propensity model parameter a");
  tr_b.option("prop-b", tr.prop_b, "Propensity model parameter b");
  tr_b.output(tr.out, tr.force);

  EvaluateOptions ev;
  Binder ev_b(app, "evaluate", "Compute R@k, nDCR@k and PSR@k on a test set");
  ev_b.option("data", ev.data, "Test dataset");
  ev_b.option("model", ev.model, "Model checkpoint");
  ev_b.option("logging-table", ev.logging_table, "Evaluate a logging table as the policy");
  ev_b.flag("greedy", ev.greedy, "Rank by score instead of sampling from the softmax");
  ev_b.option("selector-table", ev.selector_table, "Logging table of the test set used as the action selector");
  ev_b.option("p", ev.p, "Selector size");
  ev_b.option("k", ev.k, "Cutoffs");
  ev_b.option("samples", ev.samples, "Slates per instance for stochastic policies");
  ev_b.option("seed", ev.seed, "Random seed");
  ev_b.option("propensity-data", ev.propensity_data, "Dataset whose label frequencies give the propensities");
  ev_b.option("prop-a", ev.prop_a, "Propensity model parameter a");
  ev_b.option("prop-b", ev.prop_b, "Propensity model parameter b");
  ev_b.output(ev.out, ev.force);

  VerifyTheoremOptions vt;
  Binder vt_b(app, "verify-theorem", "Check the selector bias and MSE bounds by exact enumeration");
  vt_b.option("trials", vt.trials, "Number of random trials");
  vt_b.option("seed", vt.seed, "Random seed");
  vt_b.option("n", vt.n, "Log size for the MSE comparison");
  vt_b.option("env", vt.env, "JSON trial to check instead of random trials");
  vt_b.output(vt.out, vt.force);

  ConvertOptions cv;
  Binder cv_b(app, "convert", "Re-serialize a dataset in canonical form");
  cv_b.option("data", cv.data, "Input dataset");
  cv_b.output(cv.out, cv.force);

  StatsOptions st;
  Binder st_b(app, "stats", "Summarize a dataset and optionally a bandit log");
  st_b.option("data", st.data, "Dataset");
  st_b.option("log", st.log, "Bandit log drawn from the dataset");
  st_b.option("logging-table", st.logging_table, "Logging table of the dataset");
  st_b.output(st.out, st.force);

  RerunOptions rr;
  CLI::App* rr_app = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rr_app->add_option("manifest", rr.manifest, "manifest.json of the run")->required();
  rr_app->add_option("--out", rr.out, "Output directory");
  rr_app->add_flag("--force", rr.force, "Allow a nonempty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kParseError;
  }

  const Binder* active = nullptr;
  for (const Binder* b : {&sim_b, &tr_b, &ev_b, &vt_b, &cv_b, &st_b}) {
    if (b->app()->parsed()) active = b;
  }

  try {
    if (threads > 0) set_max_threads(threads);
    if (rr_app->parsed()) return rerun(rr, threads, out, err);

    Invocation inv{active->name(), active->resolved(), &out, &err};
    auto need = [&](const std::string& value, const char* flag) {
      if (value.empty()) {
        err << active->app()->help();
        throw ConfigError(fmt::format("--{} is required", flag));
      }
    };
    if (active == &sim_b) {
      need(sim.data, "data");
      need(sim.out, "out");
      return cmd_simulate_log(sim, inv);
    }
    if (active == &tr_b) {
      need(tr.data, "data");
      need(tr.log, "log");
      need(tr.out, "out");
      return cmd_train(tr, inv);
    }
    if (active == &ev_b) {
      need(ev.data, "data");
      need(ev.out, "out");
      return cmd_evaluate(ev, inv);
    }
    if (active == &vt_b) return cmd_verify_theorem(vt, inv);
    if (active == &cv_b) {
      need(cv.data, "data");
      need(cv.out, "out");
      return cmd_convert(cv, inv);
    }
    need(st.data, "data");
    return cmd_stats(st, inv);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kParseError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const oracle::AssumptionViolation& e) {
    err << "error: assumption violated: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace xbf::cli
