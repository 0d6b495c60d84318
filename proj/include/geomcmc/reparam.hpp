#pragma once

// Reparameterizations of the coordinate chart and the geometry they induce.
//
// A complete reparameterization transforms densities, vectors and covectors
// together and leaves every algorithm unchanged. An incomplete one transforms
// only the target density while the algorithm keeps its metric components;
// running in the new coordinates is then equivalent to running in the old
// coordinates with the equivalent metric  gbar = J^T g(psi(q)) J.
//
// Whether the induced geometry is optimal for a target is measured by
//   Delta(q) = gbar(q) - (-nabla^2 log pi(q)),
// which vanishes exactly when the metric equals the negated covariant Hessian
// of the log density. The sign makes Delta = 0 for a Gaussian target with its
// precision matrix as metric.

#include <string>
#include <vector>

#include "geomcmc/geometry.hpp"
#include "geomcmc/targets.hpp"

namespace geomcmc {

class Reparameterization {
 public:
  using MapFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;
  using LogDetFn = std::function<double(const Vector&)>;
  /// dJ[k](i, j) = d J^i_j / d q^k
  using JacobianDerivativesFn = std::function<std::vector<Matrix>(const Vector&)>;

  struct Maps {
    MapFn forward;
    MapFn inverse;
    JacobianFn jacobian;                        // optional: central differences of forward
    LogDetFn log_abs_det_jacobian;              // optional: from the Jacobian
    JacobianDerivativesFn jacobian_derivatives; // optional: central differences of jacobian
  };

  Reparameterization(std::string name, int dim, Maps maps);

  static Reparameterization identity(int dim);
  /// q' = A q + b; throws SingularMatrix for singular A.
  static Reparameterization affine(Matrix a, Vector b);

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(maps_.jacobian); }

  Point forward(const Point& q) const;
  Point inverse(const Point& q) const;
  Vector forward(const Vector& q) const;
  Vector inverse(const Vector& q) const;

  /// J^i_j(q) = d psi^i / d q^j
  Matrix jacobian_at(const Vector& q, double fd_step = kDefaultFdStep) const;
  double log_abs_det_jacobian_at(const Vector& q, double fd_step = kDefaultFdStep) const;
  std::vector<Matrix> jacobian_derivatives_at(const Vector& q, double fd_step = kDefaultFdStep) const;

 private:
  std::string name_;
  int dim_;
  Maps maps_;
};

/// psi(mu, lambda, theta) = (mu, lambda, (theta - mu) e^-lambda), with analytic
/// Jacobian, its derivatives and log|J| = -N lambda.
Reparameterization noncentering_reparam(const FunnelSpec& spec);

/// Names accepted by make_reparam: "identity", "noncentering".
const std::vector<std::string>& reparam_names();
Reparameterization make_reparam(const std::string& name, const FunnelSpec& spec, int dim);

/// log pi'(q') = log pi(psi^-1(q')) - log|J(psi^-1(q'))|. The gradient uses
/// the chain rule; the Hessian differentiates that gradient numerically.
TargetDensity pushforward_density(const TargetDensity& target, const Reparameterization& psi);

/// (psi(q), J v)
TangentVector pushforward_tangent(const Reparameterization& psi, const TangentVector& v);

/// Carries a covector at q to psi(q) through the inverse transpose,
/// p'_i = (J^-1)^j_i p_j, so that the pairing p(v) = p'(v') is preserved.
CotangentVector pullback_cotangent(const Reparameterization& psi, const CotangentVector& p);

/// Jacobian of the tangent-bundle map (q, v) -> (psi(q), J v), ordered (q, v).
Matrix tangent_bundle_jacobian(const Reparameterization& psi, const TangentVector& v);
/// Jacobian of the cotangent-bundle map (q, p) -> (psi(q), J^-T p).
Matrix cotangent_bundle_jacobian(const Reparameterization& psi, const CotangentVector& p);

/// gbar_ij(q) = J^l_i(q) J^m_j(q) g_lm(psi(q)). Derivatives are analytic when
/// psi supplies Jacobian derivatives and g has analytic derivatives.
MetricField equivalent_metric(const MetricField& g, const Reparameterization& psi);

class DeviationTensor {
 public:
  DeviationTensor(MetricField metric, TargetDensity target, double fd_step = kDefaultFdStep);

  const MetricField& metric() const noexcept { return metric_; }
  const TargetDensity& target() const noexcept { return target_; }

  Matrix at(const Point& q) const;
  /// |det Delta(q)|
  double scalar_at(const Point& q) const;
  /// max_ij |Delta_ij(q)|
  double max_abs_at(const Point& q) const;

 private:
  MetricField metric_;
  TargetDensity target_;
  double fd_step_;
};

DeviationTensor deviation(const MetricField& g_eff, const TargetDensity& target, double fd_step = kDefaultFdStep);

}  // namespace geomcmc
