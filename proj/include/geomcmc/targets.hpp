#pragma once

// Target log densities with derivative oracles.
//
// Funnel coordinates are ordered (mu, lambda, theta_1..theta_N) in the
// centered parameterization and (mu, lambda, theta~_1..theta~_N) in the
// non-centered one, with lambda = log tau. Additive constants are dropped.

#include <string>
#include <string_view>
#include <vector>

#include "geomcmc/geometry.hpp"

namespace geomcmc {

class TargetDensity {
 public:
  TargetDensity(std::string name, ScalarField log_density);

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return field_.dim(); }
  const ScalarField& field() const noexcept { return field_; }

  double log_density(const Vector& q) const { return field_.value(q); }
  Vector gradient(const Vector& q, double fd_step = kDefaultFdStep) const { return field_.gradient(q, fd_step); }
  Matrix hessian(const Vector& q, double fd_step = kDefaultFdStep) const { return field_.hessian(q, fd_step); }

 private:
  std::string name_;
  ScalarField field_;
};

enum class Parameterization { centered, non_centered };

std::string_view to_string(Parameterization p);

struct FunnelSpec {
  int n_individuals = 1;
  double mu_prior_scale = 1.0;
  double lambda_prior_scale = 1.0;
  Parameterization parameterization = Parameterization::centered;

  int dim() const noexcept { return n_individuals + 2; }
  /// Throws ConfigError on N < 1 or non-positive scales.
  void validate() const;
};

/// -1/2 sum_n ((theta_n - mu) e^-lambda)^2 - N lambda - 1/2 (mu/s_mu)^2 - 1/2 (lambda/s_lambda)^2
double centered_funnel_logpdf(const FunnelSpec& spec, const Point& q);

/// -1/2 sum_n theta~_n^2 - 1/2 (mu/s_mu)^2 - 1/2 (lambda/s_lambda)^2
double noncentered_funnel_logpdf(const FunnelSpec& spec, const Point& q);

/// Funnel in spec.parameterization with analytic gradient and Hessian.
TargetDensity funnel_target(const FunnelSpec& spec);

/// Multivariate normal with analytic gradient and Hessian. Throws
/// SingularMatrix when the covariance is not SPD.
TargetDensity gaussian_target(const Vector& mean, const Matrix& covariance);

// Model registry used by the command-line runner.

struct ModelSpec {
  std::string name;  // one of model_names()
  FunnelSpec funnel;
  Vector mean;        // gaussian only
  Matrix covariance;  // gaussian only
};

const std::vector<std::string>& model_names();

/// Throws ConfigError for an unknown name or inconsistent parameters.
TargetDensity make_target(const ModelSpec& spec);

}  // namespace geomcmc
