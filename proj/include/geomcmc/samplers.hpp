#pragma once

// Flow-based Markov transitions on a metric-equipped chart.
//
// Random-number consumption order (fixed, so that runs are reproducible):
//   hmc / mala / ula : D standard normals for the momentum, then one uniform
//                      for the accept test (drawn even when the transition
//                      diverged or is unadjusted).
//   rwm              : D standard normals for the velocity, then one uniform.
// Each standard normal consumes exactly two 64-bit engine outputs.

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "geomcmc/geometry.hpp"
#include "geomcmc/targets.hpp"

namespace geomcmc {

/// 64-bit Mersenne Twister with portable uniform and normal transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal by the Box-Muller transform (cosine branch only).
  double normal();
  Vector normal_vector(Eigen::Index n);

 private:
  std::mt19937_64 engine_;
};

struct SamplerConfig {
  double step_size = 0.1;
  int n_leapfrog_steps = 16;
  double integration_time = 1.0;  // geodesic random walk
  int geodesic_steps = 20;        // RK4 steps per geodesic proposal
  int n_samples = 1000;
  std::uint64_t seed = 0;
  double fixed_point_tol = 1e-10;
  int fixed_point_max_iter = 100;
  double divergence_threshold = 1000.0;
  bool adjusted = true;  // false: unadjusted Langevin (no accept test)

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

enum class SamplerKind { rwm, mala, ula, hmc };

std::string_view to_string(SamplerKind kind);
/// Throws ConfigError for an unknown name.
SamplerKind sampler_kind_from_string(std::string_view name);

/// Position with its momentum (a covector at that position).
struct PhaseState {
  Vector position;
  Vector momentum;
};

/// H(q, p) = 1/2 p^T g^-1(q) p + 1/2 log|g(q)| - log pi(q).
class Hamiltonian {
 public:
  Hamiltonian(TargetDensity target, MetricField metric);

  const TargetDensity& target() const noexcept { return target_; }
  const MetricField& metric() const noexcept { return metric_; }

  double value_at(const PhaseState& s) const;
  /// dH/dq at (q, p).
  Vector position_gradient(const Vector& q, const Vector& p) const;

 private:
  TargetDensity target_;
  MetricField metric_;
};

/// v ~ N(0, g^-1(q)), log density -1/2 g_q(v, v) + 1/2 log|g(q)| + const.
TangentVector sample_tangent_gaussian(const MetricField& g, const Point& q, Rng& rng);
/// p ~ N(0, g(q)).
CotangentVector sample_cotangent_gaussian(const MetricField& g, const Point& q, Rng& rng);

/// Kick-drift-kick leapfrog for a constant metric. Returns nullopt when the
/// new state is not finite.
std::optional<PhaseState> leapfrog_step(const Hamiltonian& h, const PhaseState& s, double step_size);

/// Generalized leapfrog for position-dependent metrics: implicit half step in
/// p, implicit full step in q (both by fixed-point iteration to `tol`), then an
/// explicit half step in p. Returns nullopt on non-convergence or non-finite
/// values.
std::optional<PhaseState> implicit_leapfrog_step(const Hamiltonian& h, const PhaseState& s, double step_size,
                                                 double tol, int max_iter);

struct Trajectory {
  std::vector<PhaseState> states;  // initial state plus one per completed step
  std::vector<double> energies;    // H at each recorded state
  bool divergent = false;
};

/// Integrates n_steps from `start`, choosing the explicit integrator for
/// constant metrics. Stops at the first non-finite, non-convergent or
/// energy-divergent step.
Trajectory integrate_trajectory(const Hamiltonian& h, const PhaseState& start, int n_steps,
                                const SamplerConfig& cfg);

struct Transition {
  Vector position;
  bool accepted = false;
  bool divergent = false;
  double energy_error = 0.0;  // H(proposal) - H(initial); 0 for rejected divergences
  double energy = 0.0;        // H (or -log pi for rwm) at the returned position
};

/// Geodesic random walk: v ~ N(0, g^-1), flow for cfg.integration_time, flip
/// the velocity, and accept with the ratio of joint densities taken relative
/// to |g(q)| dq dv, the measure the geodesic flow preserves. For constant metrics
/// this is a Gaussian random walk with covariance t^2 g^-1.
Transition geodesic_rwm_step(const TargetDensity& target, const MetricField& g, const Vector& q,
                             const SamplerConfig& cfg, Rng& rng);

Transition hmc_transition(const TargetDensity& target, const MetricField& g, const Vector& q,
                          const SamplerConfig& cfg, Rng& rng);

/// One-step HMC; with cfg.adjusted == false the accept test is skipped.
Transition mala_transition(const TargetDensity& target, const MetricField& g, const Vector& q,
                           const SamplerConfig& cfg, Rng& rng);

struct ChainOutput {
  Matrix draws;  // n_samples x D
  std::vector<bool> accepted;
  std::vector<bool> divergent;
  std::vector<double> energies;
  int divergences = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return accepted.size(); }
};

/// Runs cfg.n_samples transitions from q0. Divergent transitions are flagged
/// and keep the previous position; the chain never aborts on them.
ChainOutput run_chain(SamplerKind kind, const TargetDensity& target, const MetricField& g, const Vector& q0,
                      const SamplerConfig& cfg);

/// Chains with seeds cfg.seed + i, executed on up to `jobs` threads.
std::vector<ChainOutput> run_chains(SamplerKind kind, const TargetDensity& target, const MetricField& g,
                                    const Vector& q0, const SamplerConfig& cfg, int n_chains, int jobs);

}  // namespace geomcmc
