#include "geomcmc/targets.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "geomcmc/kernels.hpp"

namespace geomcmc {

TargetDensity::TargetDensity(std::string name, ScalarField log_density)
    : name_(std::move(name)), field_(std::move(log_density)) {}

std::string_view to_string(Parameterization p) {
  return p == Parameterization::centered ? "centered" : "non_centered";
}

void FunnelSpec::validate() const {
  if (n_individuals < 1) throw ConfigError("funnel: n_individuals must be >= 1");
  if (!(mu_prior_scale > 0.0) || !std::isfinite(mu_prior_scale)) {
    throw ConfigError("funnel: mu_prior_scale must be positive");
  }
  if (!(lambda_prior_scale > 0.0) || !std::isfinite(lambda_prior_scale)) {
    throw ConfigError("funnel: lambda_prior_scale must be positive");
  }
}

namespace {

void check_funnel_dim(const FunnelSpec& spec, const Vector& q) {
  if (q.size() != spec.dim()) {
    throw DimensionMismatch("funnel: expected " + std::to_string(spec.dim()) + " coordinates, got " +
                            std::to_string(q.size()));
  }
}

std::span<const double> individuals(const Vector& q) {
  return {q.data() + 2, static_cast<std::size_t>(q.size() - 2)};
}

double prior_terms(const FunnelSpec& spec, double mu, double lambda) {
  const double zm = mu / spec.mu_prior_scale;
  const double zl = lambda / spec.lambda_prior_scale;
  return -0.5 * zm * zm - 0.5 * zl * zl;
}

double centered_value(const FunnelSpec& spec, const Vector& q) {
  const double mu = q[0];
  const double lambda = q[1];
  const double inv_tau = std::exp(-lambda);
  const double ss = kernels::sum_squared_deviation(individuals(q), mu);
  return -0.5 * ss * inv_tau * inv_tau - spec.n_individuals * lambda + prior_terms(spec, mu, lambda);
}

double noncentered_value(const FunnelSpec& spec, const Vector& q) {
  const auto z = individuals(q);
  return -0.5 * kernels::dot(z, z) + prior_terms(spec, q[0], q[1]);
}

// With s = e^-lambda and r_n = (theta_n - mu) s:
//   d/dtheta_n = -r_n s
//   d/dmu      = s sum r_n - mu / s_mu^2
//   d/dlambda  = sum r_n^2 - N - lambda / s_lambda^2
Vector centered_gradient(const FunnelSpec& spec, const Vector& q) {
  const Eigen::Index n = spec.n_individuals;
  const double mu = q[0];
  const double lambda = q[1];
  const double s = std::exp(-lambda);
  const Vector r = (q.tail(n).array() - mu) * s;
  const std::span<const double> rs(r.data(), static_cast<std::size_t>(n));
  Vector grad(q.size());
  grad[0] = s * kernels::sum(rs) - mu / (spec.mu_prior_scale * spec.mu_prior_scale);
  grad[1] = kernels::dot(rs, rs) - static_cast<double>(n) - lambda / (spec.lambda_prior_scale * spec.lambda_prior_scale);
  grad.tail(n) = -s * r;
  return grad;
}

Matrix centered_hessian(const FunnelSpec& spec, const Vector& q) {
  const Eigen::Index n = spec.n_individuals;
  const double mu = q[0];
  const double lambda = q[1];
  const double s = std::exp(-lambda);
  const Vector r = (q.tail(n).array() - mu) * s;
  const std::span<const double> rs(r.data(), static_cast<std::size_t>(n));
  Matrix h = Matrix::Zero(q.size(), q.size());
  h(0, 0) = -static_cast<double>(n) * s * s - 1.0 / (spec.mu_prior_scale * spec.mu_prior_scale);
  h(0, 1) = h(1, 0) = -2.0 * s * kernels::sum(rs);
  h(1, 1) = -2.0 * kernels::dot(rs, rs) - 1.0 / (spec.lambda_prior_scale * spec.lambda_prior_scale);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(0, 2 + i) = h(2 + i, 0) = s * s;
    h(1, 2 + i) = h(2 + i, 1) = 2.0 * r[i] * s;
    h(2 + i, 2 + i) = -s * s;
  }
  return h;
}

Vector noncentered_gradient(const FunnelSpec& spec, const Vector& q) {
  Vector grad = -q;
  grad[0] = -q[0] / (spec.mu_prior_scale * spec.mu_prior_scale);
  grad[1] = -q[1] / (spec.lambda_prior_scale * spec.lambda_prior_scale);
  return grad;
}

Matrix noncentered_hessian(const FunnelSpec& spec, const Vector& q) {
  Matrix h = -Matrix::Identity(q.size(), q.size());
  h(0, 0) = -1.0 / (spec.mu_prior_scale * spec.mu_prior_scale);
  h(1, 1) = -1.0 / (spec.lambda_prior_scale * spec.lambda_prior_scale);
  return h;
}

}  // namespace

double centered_funnel_logpdf(const FunnelSpec& spec, const Point& q) {
  check_funnel_dim(spec, q.coords());
  return centered_value(spec, q.coords());
}

double noncentered_funnel_logpdf(const FunnelSpec& spec, const Point& q) {
  check_funnel_dim(spec, q.coords());
  return noncentered_value(spec, q.coords());
}

TargetDensity funnel_target(const FunnelSpec& spec) {
  spec.validate();
  const int dim = spec.dim();
  if (spec.parameterization == Parameterization::centered) {
    return TargetDensity("funnel-centered",
                         ScalarField(
                             dim, [spec](const Vector& q) { return centered_value(spec, q); },
                             [spec](const Vector& q) { return centered_gradient(spec, q); },
                             [spec](const Vector& q) { return centered_hessian(spec, q); }));
  }
  return TargetDensity("funnel-noncentered",
                       ScalarField(
                           dim, [spec](const Vector& q) { return noncentered_value(spec, q); },
                           [spec](const Vector& q) { return noncentered_gradient(spec, q); },
                           [spec](const Vector& q) { return noncentered_hessian(spec, q); }));
}

TargetDensity gaussian_target(const Vector& mean, const Matrix& covariance) {
  if (mean.size() < 1) throw DimensionMismatch("gaussian: mean must be non-empty");
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionMismatch("gaussian: covariance shape does not match mean");
  }
  // Precision is the metric-like object here; reuse the SPD checks.
  const MetricFactor cov = factorize_metric(covariance);
  const Matrix precision = cov.inverse;
  const int dim = static_cast<int>(mean.size());
  return TargetDensity(
      "gaussian",
      ScalarField(
          dim,
          [mean, precision](const Vector& q) {
            const Vector d = q - mean;
            return -0.5 * d.dot(precision * d);
          },
          [mean, precision](const Vector& q) { return Vector(-(precision * (q - mean))); },
          [precision](const Vector&) { return Matrix(-precision); }));
}

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"funnel-centered", "funnel-noncentered", "gaussian"};
  return names;
}

TargetDensity make_target(const ModelSpec& spec) {
  if (spec.name == "funnel-centered" || spec.name == "funnel-noncentered") {
    FunnelSpec f = spec.funnel;
    f.parameterization =
        spec.name == "funnel-centered" ? Parameterization::centered : Parameterization::non_centered;
    return funnel_target(f);
  }
  if (spec.name == "gaussian") {
    try {
      return gaussian_target(spec.mean, spec.covariance);
    } catch (const Error& e) {
      throw ConfigError(std::string("model.gaussian: ") + e.what());
    }
  }
  throw ConfigError("model.name: unknown model '" + spec.name + "'");
}

}  // namespace geomcmc
