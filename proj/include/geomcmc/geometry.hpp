#pragma once

// Dense Riemannian structure on a single global coordinate chart: points and
// (co)tangent vectors, metric fields, Levi-Civita connection coefficients,
// geodesic flow, parallel transport and covariant Hessians.
//
// Index conventions: metric components g(i, j) = g_ij; metric derivatives are
// returned as one matrix per coordinate, dg[k](i, j) = d g_ij / d q^k;
// connection coefficients are addressed as gamma(k, i, j) = Gamma^k_ij.

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <optional>
#include <vector>

#include "geomcmc/errors.hpp"

namespace geomcmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base step of central finite differences; the step used along coordinate i
/// is kDefaultFdStep * max(1, |q_i|).
inline constexpr double kDefaultFdStep = 1e-5;

double scaled_fd_step(double coordinate, double base_step);

bool all_finite(const Vector& v);

class Point {
 public:
  /// Throws DimensionMismatch for an empty vector and NonFinite for NaN/Inf.
  explicit Point(Vector coords);
  Point(std::initializer_list<double> coords);

  const Vector& coords() const noexcept { return coords_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }
  double operator[](Eigen::Index i) const { return coords_[i]; }

 private:
  Vector coords_;
};

struct TangentTag {};
struct CotangentTag {};

/// Vector in the fibre over `base`: components v^i in the basis d/dq^i for
/// tangent vectors, p_i in the basis dq^i for cotangent vectors.
template <class Tag>
class FibreVector {
 public:
  FibreVector(Point base, Vector components) : base_(std::move(base)), components_(std::move(components)) {
    if (components_.size() != base_.dim()) throw DimensionMismatch("fibre vector dimension differs from its base point");
    if (!all_finite(components_)) throw NonFinite("fibre vector has non-finite components");
  }

  const Point& base() const noexcept { return base_; }
  const Vector& components() const noexcept { return components_; }
  Eigen::Index dim() const noexcept { return components_.size(); }

 private:
  Point base_;
  Vector components_;
};

using TangentVector = FibreVector<TangentTag>;
using CotangentVector = FibreVector<CotangentTag>;

/// Real-valued function on the chart with optional analytic derivatives.
/// Missing derivatives fall back to central finite differences.
class ScalarField {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;
  using HessianFn = std::function<Matrix(const Vector&)>;

  ScalarField(int dim, ValueFn value, GradientFn gradient = {}, HessianFn hessian = {});

  int dim() const noexcept { return dim_; }
  bool has_analytic_gradient() const noexcept { return static_cast<bool>(gradient_); }
  bool has_analytic_hessian() const noexcept { return static_cast<bool>(hessian_); }

  double value(const Vector& q) const;
  Vector gradient(const Vector& q, double fd_step = kDefaultFdStep) const;
  /// Finite-difference Hessians differentiate the gradient and are symmetrised.
  Matrix hessian(const Vector& q, double fd_step = kDefaultFdStep) const;

 private:
  int dim_;
  ValueFn value_;
  GradientFn gradient_;
  HessianFn hessian_;
};

/// Cholesky-based view of one SPD metric matrix.
struct MetricFactor {
  Matrix components;
  Eigen::LLT<Matrix> llt;
  Matrix inverse;
  double log_det = 0.0;
};

/// Throws SingularMatrix when `components` is not symmetric positive definite.
MetricFactor factorize_metric(const Matrix& components);

class MetricField {
 public:
  using ComponentsFn = std::function<Matrix(const Vector&)>;
  using DerivativesFn = std::function<std::vector<Matrix>(const Vector&)>;

  /// Position-dependent metric. Without `derivatives` the partial derivatives
  /// are taken by central differences of `components`.
  MetricField(int dim, ComponentsFn components, DerivativesFn derivatives = {});

  static MetricField identity(int dim);
  static MetricField diagonal(const Vector& diag);
  /// Throws SingularMatrix unless `components` is symmetric positive definite.
  static MetricField constant(Matrix components);

  int dim() const noexcept { return dim_; }
  bool is_constant() const noexcept { return constant_.has_value(); }
  bool has_analytic_derivatives() const noexcept { return is_constant() || static_cast<bool>(derivatives_); }

  Matrix components_at(const Vector& q) const;
  std::vector<Matrix> derivatives_at(const Vector& q, double fd_step = kDefaultFdStep) const;

  /// Factorization of the components at q; cached for constant metrics.
  MetricFactor factor_at(const Vector& q) const;

 private:
  int dim_;
  ComponentsFn components_;
  DerivativesFn derivatives_;
  std::optional<MetricFactor> constant_;
};

class ChristoffelSymbols {
 public:
  explicit ChristoffelSymbols(int dim) : dim_(dim), data_(static_cast<std::size_t>(dim) * dim * dim, 0.0) {}

  int dim() const noexcept { return dim_; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }
  double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }

  /// out^k = Gamma^k_ij a^i b^j
  Vector contract(const Vector& a, const Vector& b) const;
  /// out_ij = Gamma^k_ij w_k
  Matrix contract_upper(const Vector& w) const;

  double max_abs() const;

 private:
  std::size_t index(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * dim_ + i) * dim_ + j;
  }

  int dim_;
  std::vector<double> data_;
};

/// Thrown when a geodesic leaves the representable chart. Carries the last
/// state whose coordinates were all finite.
class GeodesicDivergence : public Error {
 public:
  GeodesicDivergence(const std::string& what, TangentVector last_valid)
      : Error(what), last_valid_(std::move(last_valid)) {}
  const TangentVector& last_valid() const noexcept { return last_valid_; }

 private:
  TangentVector last_valid_;
};

Matrix metric_inverse(const MetricField& g, const Point& q);

/// g_ij(q) v^i v^j
double quadratic_form(const MetricField& g, const TangentVector& v);

/// Levi-Civita coefficients
///   Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij).
ChristoffelSymbols christoffel(const MetricField& g, const Point& q, double fd_step = kDefaultFdStep);

/// Exponential map by fixed-step RK4 on (q, v) with
///   dq/dt = v,  dv^k/dt = -Gamma^k_ij v^i v^j.
/// Returns the velocity at the end point. Constant metrics return q + t v.
TangentVector geodesic_flow(const MetricField& g, const TangentVector& state, double t, int n_steps,
                            double fd_step = kDefaultFdStep);

/// Transports `u` along the geodesic through `state`:
///   du^k/dt = -Gamma^k_ij v^i u^j.
TangentVector parallel_transport(const MetricField& g, const TangentVector& state, const TangentVector& u, double t,
                                 int n_steps, double fd_step = kDefaultFdStep);

/// Covariant Hessian with the Levi-Civita connection of g:
///   (nabla^2 f)_ij = d_i d_j f - Gamma^k_ij d_k f.
Matrix covariant_hessian(const MetricField& g, const ScalarField& f, const Point& q, double fd_step = kDefaultFdStep);

}  // namespace geomcmc
