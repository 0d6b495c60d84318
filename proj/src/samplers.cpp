#include "geomcmc/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

namespace geomcmc {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector Rng::normal_vector(Eigen::Index n) {
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

void SamplerConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("sampler.step_size must be positive");
  if (n_leapfrog_steps < 1) throw ConfigError("sampler.n_leapfrog_steps must be >= 1");
  if (!(integration_time > 0.0) || !std::isfinite(integration_time)) {
    throw ConfigError("sampler.integration_time must be positive");
  }
  if (geodesic_steps < 1) throw ConfigError("sampler.geodesic_steps must be >= 1");
  if (n_samples < 0) throw ConfigError("sampler.n_samples must be >= 0");
  if (!(fixed_point_tol > 0.0)) throw ConfigError("sampler.fixed_point_tol must be positive");
  if (fixed_point_max_iter < 1) throw ConfigError("sampler.fixed_point_max_iter must be >= 1");
  if (!(divergence_threshold > 0.0)) throw ConfigError("sampler.divergence_threshold must be positive");
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::rwm:
      return "rwm";
    case SamplerKind::mala:
      return "mala";
    case SamplerKind::ula:
      return "ula";
    case SamplerKind::hmc:
      return "hmc";
  }
  return "unknown";
}

SamplerKind sampler_kind_from_string(std::string_view name) {
  if (name == "rwm") return SamplerKind::rwm;
  if (name == "mala") return SamplerKind::mala;
  if (name == "ula") return SamplerKind::ula;
  if (name == "hmc") return SamplerKind::hmc;
  throw ConfigError("sampler.name: unknown sampler '" + std::string(name) + "' (expected rwm, mala, ula or hmc)");
}

// ---------------------------------------------------------------------------

Hamiltonian::Hamiltonian(TargetDensity target, MetricField metric)
    : target_(std::move(target)), metric_(std::move(metric)) {
  if (target_.dim() != metric_.dim()) throw DimensionMismatch("hamiltonian: target and metric dimensions differ");
}

double Hamiltonian::value_at(const PhaseState& s) const {
  const MetricFactor f = metric_.factor_at(s.position);
  return 0.5 * s.momentum.dot(f.inverse * s.momentum) + 0.5 * f.log_det - target_.log_density(s.position);
}

Vector Hamiltonian::position_gradient(const Vector& q, const Vector& p) const {
  Vector grad = -target_.gradient(q);
  if (metric_.is_constant()) return grad;
  const MetricFactor f = metric_.factor_at(q);
  const std::vector<Matrix> dg = metric_.derivatives_at(q);
  const Vector v = f.inverse * p;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    grad[i] += 0.5 * (f.inverse.cwiseProduct(dg[i])).sum() - 0.5 * v.dot(dg[i] * v);
  }
  return grad;
}

TangentVector sample_tangent_gaussian(const MetricField& g, const Point& q, Rng& rng) {
  const MetricFactor f = g.factor_at(q.coords());
  const Vector z = rng.normal_vector(q.dim());
  return TangentVector(q, f.llt.matrixU().solve(z));
}

CotangentVector sample_cotangent_gaussian(const MetricField& g, const Point& q, Rng& rng) {
  const MetricFactor f = g.factor_at(q.coords());
  const Vector z = rng.normal_vector(q.dim());
  return CotangentVector(q, f.llt.matrixL() * z);
}

// ---------------------------------------------------------------------------
// Integrators

std::optional<PhaseState> leapfrog_step(const Hamiltonian& h, const PhaseState& s, double step_size) {
  try {
    const MetricFactor f = h.metric().factor_at(s.position);
    const Matrix& inv = f.inverse;
    const double half = 0.5 * step_size;
    PhaseState out = s;
    out.momentum += half * h.target().gradient(out.position);
    out.position += step_size * (inv * out.momentum);
    out.momentum += half * h.target().gradient(out.position);
    if (!out.position.allFinite() || !out.momentum.allFinite()) return std::nullopt;
    return out;
  } catch (const Error&) {
    return std::nullopt;
  }
}

namespace {

bool converged(const Vector& next, const Vector& prev, double tol) {
  return (next - prev).cwiseAbs().maxCoeff() <= tol * (1.0 + prev.cwiseAbs().maxCoeff());
}

}  // namespace

std::optional<PhaseState> implicit_leapfrog_step(const Hamiltonian& h, const PhaseState& s, double step_size,
                                                 double tol, int max_iter) {
  try {
    const Vector& q = s.position;
    const Vector& p = s.momentum;
    const double half = 0.5 * step_size;
    const MetricField& g = h.metric();

    // p_half = p - eps/2 dH/dq(q, p_half); only the kinetic term depends on p_half.
    const MetricFactor f0 = g.factor_at(q);
    const std::vector<Matrix> dg0 = g.derivatives_at(q);
    Vector fixed_part = -h.target().gradient(q);
    for (Eigen::Index i = 0; i < q.size(); ++i) fixed_part[i] += 0.5 * (f0.inverse.cwiseProduct(dg0[i])).sum();

    Vector p_half = p;
    bool ok = false;
    for (int it = 0; it < max_iter; ++it) {
      const Vector v = f0.inverse * p_half;
      Vector grad = fixed_part;
      for (Eigen::Index i = 0; i < q.size(); ++i) grad[i] -= 0.5 * v.dot(dg0[i] * v);
      Vector next = p - half * grad;
      if (!next.allFinite()) return std::nullopt;
      const bool done = converged(next, p_half, tol);
      p_half = std::move(next);
      if (done) {
        ok = true;
        break;
      }
    }
    if (!ok) return std::nullopt;

    // q' = q + eps/2 (g^-1(q) + g^-1(q')) p_half
    const Vector v0 = f0.inverse * p_half;
    Vector q_new = q + step_size * v0;
    ok = false;
    for (int it = 0; it < max_iter; ++it) {
      if (!q_new.allFinite()) return std::nullopt;
      const MetricFactor f = g.factor_at(q_new);
      Vector next = q + half * (v0 + f.inverse * p_half);
      if (!next.allFinite()) return std::nullopt;
      const bool done = converged(next, q_new, tol);
      q_new = std::move(next);
      if (done) {
        ok = true;
        break;
      }
    }
    if (!ok) return std::nullopt;

    PhaseState out{q_new, p_half - half * h.position_gradient(q_new, p_half)};
    if (!out.momentum.allFinite()) return std::nullopt;
    return out;
  } catch (const Error&) {
    return std::nullopt;
  }
}

Trajectory integrate_trajectory(const Hamiltonian& h, const PhaseState& start, int n_steps,
                                const SamplerConfig& cfg) {
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.energies.reserve(static_cast<std::size_t>(n_steps) + 1);
  const double h0 = h.value_at(start);
  traj.states.push_back(start);
  traj.energies.push_back(h0);
  const bool explicit_ok = h.metric().is_constant();
  PhaseState current = start;
  for (int step = 0; step < n_steps; ++step) {
    auto next = explicit_ok ? leapfrog_step(h, current, cfg.step_size)
                            : implicit_leapfrog_step(h, current, cfg.step_size, cfg.fixed_point_tol,
                                                     cfg.fixed_point_max_iter);
    if (!next) {
      traj.divergent = true;
      break;
    }
    double energy;
    try {
      energy = h.value_at(*next);
    } catch (const Error&) {
      traj.divergent = true;
      break;
    }
    current = std::move(*next);
    traj.states.push_back(current);
    traj.energies.push_back(energy);
    if (!std::isfinite(energy) || std::abs(energy - h0) > cfg.divergence_threshold) {
      traj.divergent = true;
      break;
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Transitions

namespace {

Transition hmc_impl(const Hamiltonian& h, const Vector& q, int n_steps, bool adjusted, const SamplerConfig& cfg,
                    Rng& rng) {
  const Point here(q);
  const PhaseState start{q, sample_cotangent_gaussian(h.metric(), here, rng).components()};
  const Trajectory traj = integrate_trajectory(h, start, n_steps, cfg);
  const double log_u = std::log(rng.uniform());

  Transition t;
  const double h0 = traj.energies.front();
  t.energy_error = traj.energies.back() - h0;
  if (traj.divergent || static_cast<int>(traj.states.size()) != n_steps + 1) {
    t.position = q;
    t.divergent = true;
    t.energy = h0;
    return t;
  }
  // The final momentum flip makes the proposal an involution; it does not
  // change H for the Gaussian kinetic energy, so only the position is kept.
  if (!adjusted || log_u < -t.energy_error) {
    t.position = traj.states.back().position;
    t.accepted = true;
    t.energy = traj.energies.back();
  } else {
    t.position = q;
    t.energy = h0;
  }
  return t;
}

// Log density of (q, v) relative to the measure |g(q)| dq dv, which the
// geodesic flow preserves: the Lebesgue density of the tangent Gaussian times
// 1 / |g(q)|.
double log_phase_density(double log_pi, const MetricFactor& f, const Vector& v) {
  return log_pi - 0.5 * v.dot(f.components * v) - 0.5 * f.log_det;
}

Transition rwm_impl(const TargetDensity& target, const MetricField& g, const Vector& q, const SamplerConfig& cfg,
                    Rng& rng) {
  const Point here(q);
  const MetricFactor f0 = g.factor_at(q);
  const TangentVector v = sample_tangent_gaussian(g, here, rng);
  const double log_pi0 = target.log_density(q);
  const double log_joint0 = log_phase_density(log_pi0, f0, v.components());

  Transition t;
  t.position = q;
  t.energy = -log_pi0;
  double log_ratio = -std::numeric_limits<double>::infinity();
  Vector proposal;
  try {
    const TangentVector end = geodesic_flow(g, v, cfg.integration_time, cfg.geodesic_steps);
    proposal = end.base().coords();
    const Vector flipped = -end.components();
    const MetricFactor f1 = g.factor_at(proposal);
    const double log_pi1 = target.log_density(proposal);
    log_ratio = log_phase_density(log_pi1, f1, flipped) - log_joint0;
    if (!std::isfinite(log_pi1)) t.divergent = true;
  } catch (const Error&) {
    t.divergent = true;
  }
  const double log_u = std::log(rng.uniform());
  if (t.divergent || std::isnan(log_ratio)) {
    t.divergent = true;
    return t;
  }
  t.energy_error = -log_ratio;
  if (log_u < log_ratio) {
    t.position = std::move(proposal);
    t.accepted = true;
    t.energy = -target.log_density(t.position);
  }
  return t;
}

Transition transition_impl(SamplerKind kind, const Hamiltonian& h, const Vector& q, const SamplerConfig& cfg,
                           Rng& rng) {
  switch (kind) {
    case SamplerKind::rwm:
      return rwm_impl(h.target(), h.metric(), q, cfg, rng);
    case SamplerKind::mala:
      return hmc_impl(h, q, 1, cfg.adjusted, cfg, rng);
    case SamplerKind::ula:
      return hmc_impl(h, q, 1, false, cfg, rng);
    case SamplerKind::hmc:
      return hmc_impl(h, q, cfg.n_leapfrog_steps, true, cfg, rng);
  }
  throw Error("unknown sampler kind");
}

}  // namespace

Transition geodesic_rwm_step(const TargetDensity& target, const MetricField& g, const Vector& q,
                             const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  return rwm_impl(target, g, q, cfg, rng);
}

Transition hmc_transition(const TargetDensity& target, const MetricField& g, const Vector& q,
                          const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  return hmc_impl(Hamiltonian(target, g), q, cfg.n_leapfrog_steps, true, cfg, rng);
}

Transition mala_transition(const TargetDensity& target, const MetricField& g, const Vector& q,
                           const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  return hmc_impl(Hamiltonian(target, g), q, 1, cfg.adjusted, cfg, rng);
}

ChainOutput run_chain(SamplerKind kind, const TargetDensity& target, const MetricField& g, const Vector& q0,
                      const SamplerConfig& cfg) {
  cfg.validate();
  if (q0.size() != target.dim()) throw DimensionMismatch("run_chain: initial point has the wrong dimension");
  const Point start(q0);
  const Hamiltonian h(target, g);
  Rng rng(cfg.seed);

  ChainOutput out;
  out.seed = cfg.seed;
  out.draws.resize(cfg.n_samples, target.dim());
  out.accepted.reserve(cfg.n_samples);
  out.divergent.reserve(cfg.n_samples);
  out.energies.reserve(cfg.n_samples);
  Vector q = start.coords();
  for (int i = 0; i < cfg.n_samples; ++i) {
    Transition t = transition_impl(kind, h, q, cfg, rng);
    q = std::move(t.position);
    out.draws.row(i) = q.transpose();
    out.accepted.push_back(t.accepted);
    out.divergent.push_back(t.divergent);
    out.energies.push_back(t.energy);
    if (t.divergent) ++out.divergences;
  }
  return out;
}

std::vector<ChainOutput> run_chains(SamplerKind kind, const TargetDensity& target, const MetricField& g,
                                    const Vector& q0, const SamplerConfig& cfg, int n_chains, int jobs) {
  if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
  cfg.validate();
  std::vector<ChainOutput> chains(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_chains; i = next++) {
      try {
        SamplerConfig chain_cfg = cfg;
        chain_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
        chains[i] = run_chain(kind, target, g, q0, chain_cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(jobs, 1, n_chains);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return chains;
}

}  // namespace geomcmc
