// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "geomcmc/diagnostics.hpp"
#include "geomcmc/reparam.hpp"
#include "geomcmc/samplers.hpp"
#include "test_support.hpp"

namespace {

using namespace geomcmc;
using geomcmc::testgen::Gen;
using geomcmc::testgen::max_abs_diff;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

FunnelSpec funnel(Parameterization p = Parameterization::centered) {
  FunnelSpec spec;
  spec.parameterization = p;
  return spec;
}

MetricField gbar() { return equivalent_metric(MetricField::identity(3), noncentering_reparam(funnel())); }

Matrix four_term_metric(double mu, double lambda, double theta) {
  const double e = std::exp(-2.0 * lambda);
  const double d = theta - mu;
  Matrix a(3, 3), b(3, 3), c(3, 3), f(3, 3);
  a << 1, 0, 0, 0, 1, 0, 0, 0, 0;
  b << 0, 1, 0, 1, 0, -1, 0, -1, 0;
  c << 1, 0, -1, 0, 0, 0, -1, 0, 1;
  f << 0, 0, 0, 0, 1, 0, 0, 0, 0;
  return a + e * d * b + e * c + e * d * d * f;
}

std::optional<PhaseState> steps(const Hamiltonian& h, PhaseState s, double eps, int n, double tol = 1e-10) {
  for (int i = 0; i < n; ++i) {
    auto next = h.metric().is_constant() ? leapfrog_step(h, s, eps) : implicit_leapfrog_step(h, s, eps, tol, 100);
    if (!next) return std::nullopt;
    s = *next;
  }
  return s;
}

Outcome funnel_optimality() {
  Gen gen(1);
  const auto target = funnel_target(funnel());
  const auto analytic = deviation(gbar(), target);
  const MetricField metric_fd(3, [g = gbar()](const Vector& q) { return g.components_at(q); });
  const TargetDensity target_fd("funnel-fd", ScalarField(3, [target](const Vector& q) { return target.log_density(q); }));
  const auto numeric = deviation(metric_fd, target_fd);
  double worst = 0.0, worst_fd = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Point q(gen.normal_vector(3));
    worst = std::max(worst, analytic.max_abs_at(q));
    worst_fd = std::max(worst_fd, numeric.max_abs_at(q));
  }
  return {worst < 1e-6 && worst_fd < 1e-4,
          fmt("max |Delta_ij| analytic %.2e (< 1e-6), finite differences %.2e (< 1e-4), 200 points", worst, worst_fd)};
}

Outcome equivalent_metric_closed_form() {
  Gen gen(2);
  const auto g = gbar();
  const auto psi = noncentering_reparam(funnel());
  double worst = 0.0, worst_det = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector q = gen.normal_vector(3);
    worst = std::max(worst, max_abs_diff(g.components_at(q), four_term_metric(q[0], q[1], q[2])));
    worst_det = std::max(worst_det, std::abs(std::abs(psi.jacobian_at(q).determinant()) - std::exp(-q[1])));
  }
  return {worst < 1e-12 && worst_det < 1e-12,
          fmt("max entry error %.2e (< 1e-12), max ||det J| - e^-lambda| %.2e (< 1e-12), 100 points", worst, worst_det)};
}

Outcome complete_invariances() {
  Gen gen(3);
  const auto psi = noncentering_reparam(funnel());
  const auto centered = funnel_target(funnel());
  const auto noncentered = funnel_target(funnel(Parameterization::non_centered));
  double quad = 0.0, pairing = 0.0, tq = 0.0, tsq = 0.0, density = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector q = gen.normal_vector(3);
    const Point base(q);
    const Matrix s = gen.spd(3);
    const TangentVector v(base, gen.normal_vector(3));
    const CotangentVector p(base, gen.normal_vector(3));
    const Matrix j = psi.jacobian_at(q);
    const Matrix j_inv = j.inverse();

    // g'(q') = J^-T g J^-1 for the constant metric s
    const Vector vp = pushforward_tangent(psi, v).components();
    const double before = v.components().dot(s * v.components());
    const double after = vp.dot(j_inv.transpose() * s * j_inv * vp);
    quad = std::max(quad, std::abs(after - before) / std::max(1.0, std::abs(before)));

    const double pair0 = p.components().dot(v.components());
    const double pair1 = pullback_cotangent(psi, p).components().dot(vp);
    pairing = std::max(pairing, std::abs(pair1 - pair0) / std::max(1.0, std::abs(pair0)));

    const double det_j = j.determinant();
    tq = std::max(tq, std::abs(std::abs(tangent_bundle_jacobian(psi, v).determinant()) - det_j * det_j) /
                          std::max(1.0, det_j * det_j));
    tsq = std::max(tsq, std::abs(std::abs(cotangent_bundle_jacobian(psi, p).determinant()) - 1.0));

    const double lhs = noncentered.log_density(psi.forward(q));
    const double rhs = centered.log_density(q) - std::log(std::abs(det_j));
    density = std::max(density, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  const double worst = std::max({quad, pairing, tq, tsq, density});
  return {worst < 1e-10, fmt("quadratic form %.1e, pairing %.1e, |J_TQ| %.1e, |J_T*Q| %.1e, density %.1e (all < 1e-10)",
                             quad, pairing, tq, tsq, density)};
}

Outcome geodesic_straightening() {
  Gen gen(4);
  const auto psi = noncentering_reparam(funnel());
  const auto g = gbar();
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Vector q0 = gen.normal_vector(3);
    const Vector v0 = gen.normal_vector(3, 0.5);
    const Vector start = psi.forward(q0), direction = psi.jacobian_at(q0) * v0;
    // sample the flow at several times so the whole path is checked
    for (double t : {0.25, 0.5, 0.75, 1.0}) {
      const auto end = geodesic_flow(g, TangentVector(Point(q0), v0), t, static_cast<int>(std::lround(1e4 * t)));
      worst = std::max(worst, max_abs_diff(psi.forward(end.base().coords()), start + t * direction));
    }
  }
  return {worst < 1e-6, fmt("max deviation from the straight line %.2e (< 1e-6), 20 flows, 10^4 steps per unit time", worst)};
}

Outcome integrator_contracts() {
  Gen gen(5);
  double reversibility = 0.0, volume = 0.0, implicit_gap = 0.0;
  const double tol = 1e-10;
  for (int i = 0; i < 50; ++i) {
    const Hamiltonian h(funnel_target(funnel(Parameterization::non_centered)), MetricField::constant(gen.spd(3)));
    const PhaseState s0{gen.normal_vector(3), gen.normal_vector(3)};
    auto s1 = steps(h, s0, 0.1, 10);
    if (!s1) return {false, "leapfrog failed on a random state"};
    s1->momentum = -s1->momentum;
    const auto back = steps(h, *s1, 0.1, 10);
    if (!back) return {false, "leapfrog failed on the reversed state"};
    reversibility = std::max({reversibility, max_abs_diff(back->position, s0.position),
                              max_abs_diff(-back->momentum, s0.momentum)});

    Vector z(6);
    z << s0.position, s0.momentum;
    Matrix jac(6, 6);
    for (int k = 0; k < 6; ++k) {
      Vector a = z, b = z;
      a[k] += 1e-5;
      b[k] -= 1e-5;
      const auto sa = leapfrog_step(h, {a.head(3), a.tail(3)}, 0.2);
      const auto sb = leapfrog_step(h, {b.head(3), b.tail(3)}, 0.2);
      Vector da(6);
      da << sa->position - sb->position, sa->momentum - sb->momentum;
      jac.col(k) = da / 2e-5;
    }
    volume = std::max(volume, std::abs(jac.determinant() - 1.0));

    const auto e = leapfrog_step(h, s0, 0.1);
    const auto m = implicit_leapfrog_step(h, s0, 0.1, tol, 100);
    if (!e || !m) return {false, "single step failed"};
    implicit_gap = std::max({implicit_gap, max_abs_diff(e->position, m->position), max_abs_diff(e->momentum, m->momentum)});
  }

  const Hamiltonian gauss(gaussian_target(Vector::Zero(5), Matrix::Identity(5, 5)), MetricField::identity(5));
  double coarse = 0.0, fine = 0.0;
  for (int i = 0; i < 200; ++i) {
    const PhaseState s{gen.normal_vector(5), gen.normal_vector(5)};
    const double h0 = gauss.value_at(s);
    coarse += std::abs(gauss.value_at(*steps(gauss, s, 0.1, 10)) - h0);
    fine += std::abs(gauss.value_at(*steps(gauss, s, 0.05, 20)) - h0);
  }
  const double ratio = coarse / fine;
  const bool pass = reversibility < 1e-12 && volume < 1e-6 && ratio >= 3.5 && ratio <= 4.5 && implicit_gap < tol;
  return {pass, fmt("reversibility %.1e (< 1e-12), |det - 1| %.1e (< 1e-6), halving ratio %.3f (in [3.5, 4.5]), "
                    "implicit vs explicit %.1e (< 1e-10)",
                    reversibility, volume, ratio, implicit_gap)};
}

// Largest |estimate - truth| / MCSE over means and variances of all columns.
double worst_standard_error(const Matrix& draws) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    const Vector x = draws.col(c);
    const double m = x.mean();
    const Vector sq = (x.array() - m).square().matrix();
    const double n = static_cast<double>(x.size());
    const double v = sq.sum() / (n - 1.0);
    const double ess_x = effective_sample_size(std::span<const double>(x.data(), x.size())).ess;
    const double ess_sq = effective_sample_size(std::span<const double>(sq.data(), sq.size())).ess;
    const double sd_sq = std::sqrt((sq.array() - sq.mean()).square().sum() / (n - 1.0));
    worst = std::max(worst, std::abs(m) / std::sqrt(v / ess_x));
    worst = std::max(worst, std::abs(v - 1.0) / (sd_sq / std::sqrt(ess_sq)));
  }
  return worst;
}

Outcome sampler_correctness() {
  using clock = std::chrono::steady_clock;
  struct Case {
    const char* name;
    SamplerKind kind;
    int dim;
    SamplerConfig cfg;
  };
  SamplerConfig hmc;
  hmc.step_size = 0.2;
  hmc.n_leapfrog_steps = 32;
  hmc.n_samples = 20000;
  SamplerConfig rwm = hmc;
  rwm.integration_time = 1.0;
  SamplerConfig mala = hmc;
  mala.step_size = 0.5;
  const std::vector<Case> cases{{"hmc-10d", SamplerKind::hmc, 10, hmc},
                                {"rwm-1d", SamplerKind::rwm, 1, rwm},
                                {"mala-1d", SamplerKind::mala, 1, mala}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto start = clock::now();
    const auto out = run_chain(c.kind, gaussian_target(Vector::Zero(c.dim), Matrix::Identity(c.dim, c.dim)),
                               MetricField::identity(c.dim), Vector::Zero(c.dim), c.cfg);
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    const double z = worst_standard_error(out.draws);
    pass = pass && z < 3.0 && seconds < 60.0;
    detail += fmt("%s max %.2f MCSE in %.1fs; ", c.name, z, seconds);
  }
  detail += "bound 3 MCSE, 60s each";
  return {pass, detail};
}

Outcome funnel_ordering() {
  const auto centered = funnel_target(funnel());
  const auto noncentered = funnel_target(funnel(Parameterization::non_centered));
  const auto metric = gbar();
  int seed_passes = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SamplerConfig cfg;
    cfg.step_size = 0.1;
    cfg.n_leapfrog_steps = 16;
    cfg.n_samples = 10000;
    cfg.seed = seed;
    const auto c = run_chain(SamplerKind::hmc, centered, MetricField::identity(3), Vector::Zero(3), cfg);
    const auto nc = run_chain(SamplerKind::hmc, noncentered, MetricField::identity(3), Vector::Zero(3), cfg);
    const auto eq = run_chain(SamplerKind::hmc, centered, metric, Vector::Zero(3), cfg);
    const auto sc = summarize(c), snc = summarize(nc), seq = summarize(eq);
    bool within_two = true;
    for (int k = 0; k < 3; ++k) {
      const double r = seq.ess[k] / snc.ess[k];
      within_two = within_two && r >= 0.5 && r <= 2.0;
    }
    const bool ess_better = snc.ess[1] > sc.ess[1];
    const bool fewer = c.divergences > 0 && 10 * nc.divergences <= c.divergences;
    const bool ok = ess_better && fewer && within_two;
    seed_passes += ok;
    detail += fmt("seed %d: ESS(lambda) c/nc/eq %.0f/%.0f/%.0f, divergences c/nc/eq %d/%d/%d %s; ", static_cast<int>(seed),
                  sc.ess[1], snc.ess[1], seq.ess[1], c.divergences, nc.divergences, eq.divergences, ok ? "ok" : "not ok");
  }
  detail += fmt("%d of 3 seeds", seed_passes);
  return {seed_passes >= 2, detail};
}

Outcome exact_flow_equivalence() {
  Gen gen(8);
  const auto psi = noncentering_reparam(funnel());
  const Hamiltonian centered(funnel_target(funnel()), gbar());
  const Hamiltonian noncentered(funnel_target(funnel(Parameterization::non_centered)), MetricField::identity(3));
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Vector q0 = psi.inverse(gen.normal_vector(3));
    const Vector p0 = psi.jacobian_at(q0).transpose() * gen.normal_vector(3);
    const auto c = steps(centered, {q0, p0}, 1e-4, 10000, 1e-12);
    const Vector pt0 = psi.jacobian_at(q0).transpose().lu().solve(p0);
    const auto nc = steps(noncentered, {psi.forward(q0), pt0}, 1e-4, 10000);
    if (!c || !nc) return {false, "trajectory failed"};
    worst = std::max(worst, max_abs_diff(psi.forward(c->position), nc->position));
  }
  return {worst < 1e-4, fmt("max position gap after unit time %.2e (< 1e-4), 3 trajectories, eps 1e-4", worst)};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  struct Criterion {
    const char* name;
    double time_limit;  // seconds; 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"funnel optimality", 10.0, funnel_optimality},
      {"equivalent-metric closed form", 1.0, equivalent_metric_closed_form},
      {"complete-reparameterization invariances", 0.0, complete_invariances},
      {"geodesic straightening", 30.0, geodesic_straightening},
      {"integrator contracts", 0.0, integrator_contracts},
      {"sampler correctness", 0.0, sampler_correctness},
      {"funnel performance ordering", 300.0, funnel_ordering},
      {"exact-flow equivalence", 0.0, exact_flow_equivalence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    if (c.time_limit > 0.0 && seconds >= c.time_limit) {
      o.pass = false;
      o.detail += fmt("; runtime limit %.0fs exceeded", c.time_limit);
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
