#pragma once

// Configuration-driven experiments behind the command-line tool.
//
// A config is one JSON document:
//
//   {
//     "model":   {"name": "funnel-centered", "n_individuals": 1,
//                 "mu_prior_scale": 1, "lambda_prior_scale": 1},
//     "parameterization": "centered",             (optional consistency check)
//     "metric":  {"kind": "identity"}
//              | {"kind": "diagonal", "values": [...]}
//              | {"kind": "equivalent", "reparam": "noncentering",
//                 "base_diagonal": [...]},         (optional, default identity)
//     "sampler": {"name": "hmc", "step_size": 0.1, "n_leapfrog_steps": 16,
//                 "integration_time": 1, "geodesic_steps": 20,
//                 "n_samples": 1000, "seed": 0, "n_chains": 1, ...},
//     "initial": [...],
//     "trajectory": {"steps": 16, "momentum": [...]},
//     "grid": {"kind": "box", "low": -2, "high": 2, "resolution": 5}
//           | {"kind": "envelope", "count": 200, "seed": 0}
//           | {"kind": "points", "points": [[...], ...]},
//     "outputs": ["chain", "summary", "trajectory", "deviation_grid"],
//     "output_dir": "out"
//   }
//
// Unknown keys are rejected with a ConfigError naming them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geomcmc/geometry.hpp"
#include "geomcmc/reparam.hpp"
#include "geomcmc/samplers.hpp"
#include "geomcmc/targets.hpp"

namespace geomcmc {

std::string_view toolkit_version();

struct MetricSpec {
  enum class Kind { identity, diagonal, equivalent };
  Kind kind = Kind::identity;
  std::vector<double> values;         // diagonal
  std::string reparam;                // equivalent
  std::vector<double> base_diagonal;  // equivalent; empty means identity
};

struct GridSpec {
  enum class Kind { box, envelope, points };
  Kind kind = Kind::box;
  double low = -2.0;
  double high = 2.0;
  int resolution = 5;
  int count = 200;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> points;
};

struct ExperimentConfig {
  ModelSpec model;
  std::optional<Parameterization> parameterization;
  MetricSpec metric;
  SamplerKind sampler = SamplerKind::hmc;
  SamplerConfig sampler_cfg;
  int n_chains = 1;
  std::optional<std::vector<double>> initial;
  std::optional<int> trajectory_steps;
  std::optional<std::vector<double>> trajectory_momentum;
  GridSpec grid;
  std::vector<std::string> outputs{"summary"};
  std::string output_dir = ".";

  int dim() const;
  bool wants(std::string_view output) const;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and parses a file; I/O and syntax problems are ConfigErrors.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config (defaults filled in); parse_config round-trips it.
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

/// "box:LOW:HIGH:RES" or "envelope:COUNT[:SEED]".
GridSpec parse_grid_spec(std::string_view spec);
std::vector<Vector> grid_points(const GridSpec& grid, int dim);

/// Column labels: mu, lambda, theta_1.. (theta_tilde_1.. when non-centered)
/// for funnels; x_1.. otherwise.
std::vector<std::string> coordinate_names(const ExperimentConfig& cfg);

TargetDensity build_target(const ExperimentConfig& cfg);
MetricField build_metric(const ExperimentConfig& cfg);
Vector initial_point(const ExperimentConfig& cfg);

// Commands. Each writes its artifacts under cfg.output_dir and returns the
// JSON document printed on standard output. On failure every file written so
// far is removed before the exception propagates.

nlohmann::ordered_json run_command(const ExperimentConfig& cfg, int jobs);
nlohmann::ordered_json trajectory_command(const ExperimentConfig& cfg);
nlohmann::ordered_json compare_command(const ExperimentConfig& cfg, int jobs);
nlohmann::ordered_json deviation_command(const ExperimentConfig& cfg);

}  // namespace geomcmc
