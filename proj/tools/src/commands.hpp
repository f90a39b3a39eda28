#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace xbf::cli {

/// What every command receives besides its own options.
struct Invocation {
  std::string command;
  std::map<std::string, std::string> config;  ///< resolved options, recorded in the manifest
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

struct SimulateLogOptions {
  std::string data;
  std::string test_data;
  double alpha = 0.2;
  double beta = 0.0;
  double temperature = 1.0;
  std::size_t top_m = 100;
  std::size_t ell = 5;
  std::uint64_t seed = 0;
  std::size_t base_epochs = 20;
  double base_lr = 2.0;
  std::string out;
  bool force = false;
};

struct TrainOptions {
  std::string data;
  std::string log;
  std::string logging_table;
  std::string init;
  std::string mode = "poxm";
  std::vector<std::size_t> p_grid{10, 20, 50, 100};
  std::vector<double> lambda_grid{0.7, 0.8, 0.9, 1.0};
  std::size_t epochs = 10;
  double lr = 5.0;
  double direct_lr = 20.0;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t negative_samples = 0;  ///< 0 keeps the built-in default
  std::size_t full_softmax_threshold = 30000;
  double momentum = 0.0;
  double holdout = 0.0;
  bool wpoxm = false;
  double prop_a = 0.55;
  double prop_b = 1.5;
  std::string out;
  bool force = false;
};

struct EvaluateOptions {
  std::string data;
  std::string model;
  std::string logging_table;
  bool greedy = false;
  std::string selector_table;
  std::size_t p = 0;
  std::vector<std::size_t> k{3, 5};
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  std::string propensity_data;
  double prop_a = 0.55;
  double prop_b = 1.5;
  std::string out;
  bool force = false;
};

struct VerifyTheoremOptions {
  std::size_t trials = 500;
  std::uint64_t seed = 0;
  std::size_t n = 10;
  std::string env;
  std::string out;
  bool force = false;
};

struct ConvertOptions {
  std::string data;
  std::string out;
  bool force = false;
};

struct StatsOptions {
  std::string data;
  std::string log;
  std::string logging_table;
  std::string out;
  bool force = false;
};

int cmd_simulate_log(const SimulateLogOptions& opt, const Invocation& inv);
int cmd_train(const TrainOptions& opt, const Invocation& inv);
int cmd_evaluate(const EvaluateOptions& opt, const Invocation& inv);
int cmd_verify_theorem(const VerifyTheoremOptions& opt, const Invocation& inv);
int cmd_convert(const ConvertOptions& opt, const Invocation& inv);
int cmd_stats(const StatsOptions& opt, const Invocation& inv);

}  // namespace xbf::cli
