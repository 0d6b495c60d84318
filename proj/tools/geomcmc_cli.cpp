// geomcmc: run sampling experiments from a JSON config.
//
//   geomcmc run <config.json>
//   geomcmc trajectory <config.json> [--steps N]
//   geomcmc compare <config.json>
//   geomcmc deviation <config.json> --grid <spec>
//
// Common flags: --jobs N, --seed S, --output-dir DIR.
// GEOMCMC_LOG sets the stderr log level (trace, debug, info, warn, error, off).
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "geomcmc/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void setup_logging() {
  auto logger = spdlog::stderr_logger_st("geomcmc");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GEOMCMC_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

struct Options {
  std::string config;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> steps;
  std::string grid;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("config", opt.config, "Experiment config (JSON)")->required();
  cmd->add_option("--jobs", opt.jobs, "Chains run in parallel")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opt.seed, "Override sampler.seed");
  cmd->add_option("--output-dir", opt.output_dir, "Override output_dir");
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Riemannian MCMC experiments"};
  app.set_version_flag("--version", std::string(geomcmc::toolkit_version()));
  app.require_subcommand(1);
  Options opt;
  auto* run = app.add_subcommand("run", "Sample and write chains and summaries");
  auto* trajectory = app.add_subcommand("trajectory", "Write one integrator trajectory");
  auto* compare = app.add_subcommand("compare", "Compare funnel parameterizations under a matched budget");
  auto* deviation = app.add_subcommand("deviation", "Evaluate the optimality deviation on a grid");
  for (auto* cmd : {run, trajectory, compare, deviation}) add_common(cmd, opt);
  trajectory->add_option("--steps", opt.steps, "Integrator steps")->check(CLI::PositiveNumber);
  deviation->add_option("--grid", opt.grid, "box:LOW:HIGH:RES or envelope:COUNT[:SEED]")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    geomcmc::ExperimentConfig cfg = geomcmc::load_config(opt.config);
    if (opt.seed) cfg.sampler_cfg.seed = *opt.seed;
    if (opt.output_dir) cfg.output_dir = *opt.output_dir;
    if (opt.steps) cfg.trajectory_steps = *opt.steps;
    if (!opt.grid.empty()) cfg.grid = geomcmc::parse_grid_spec(opt.grid);

    nlohmann::ordered_json result;
    if (*run) {
      result = geomcmc::run_command(cfg, opt.jobs);
    } else if (*trajectory) {
      result = geomcmc::trajectory_command(cfg);
    } else if (*compare) {
      result = geomcmc::compare_command(cfg, opt.jobs);
    } else {
      result = geomcmc::deviation_command(cfg);
    }
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const geomcmc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
