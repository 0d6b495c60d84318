#include "geomcmc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geomcmc {

double scaled_fd_step(double coordinate, double base_step) { return base_step * std::max(1.0, std::abs(coordinate)); }

bool all_finite(const Vector& v) { return v.allFinite(); }

Point::Point(Vector coords) : coords_(std::move(coords)) {
  if (coords_.size() < 1) throw DimensionMismatch("point must have at least one coordinate");
  if (!coords_.allFinite()) throw NonFinite("point has non-finite coordinates");
}

Point::Point(std::initializer_list<double> coords)
    : Point(Vector(Eigen::Map<const Vector>(coords.begin(), static_cast<Eigen::Index>(coords.size())))) {}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(int dim, ValueFn value, GradientFn gradient, HessianFn hessian)
    : dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)), hessian_(std::move(hessian)) {
  if (dim_ < 1) throw DimensionMismatch("scalar field dimension must be positive");
  if (!value_) throw Error("scalar field requires a value function");
}

namespace {

void check_dim(const Vector& q, int dim, const char* what) {
  if (q.size() != dim) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(dim) + ", got " +
                            std::to_string(q.size()));
  }
}

}  // namespace

double ScalarField::value(const Vector& q) const {
  check_dim(q, dim_, "scalar field");
  return value_(q);
}

Vector ScalarField::gradient(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "scalar field gradient");
  if (gradient_) return gradient_(q);
  Vector grad(dim_);
  Vector probe = q;
  for (int i = 0; i < dim_; ++i) {
    const double h = scaled_fd_step(q[i], fd_step);
    probe[i] = q[i] + h;
    const double up = value_(probe);
    probe[i] = q[i] - h;
    const double down = value_(probe);
    probe[i] = q[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  if (!grad.allFinite()) throw NonFinite("finite-difference gradient is not finite");
  return grad;
}

Matrix ScalarField::hessian(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "scalar field hessian");
  if (hessian_) return hessian_(q);
  Matrix hess(dim_, dim_);
  Vector probe = q;
  if (gradient_) {
    for (int j = 0; j < dim_; ++j) {
      const double h = scaled_fd_step(q[j], fd_step);
      probe[j] = q[j] + h;
      const Vector up = gradient_(probe);
      probe[j] = q[j] - h;
      const Vector down = gradient_(probe);
      probe[j] = q[j];
      hess.col(j) = (up - down) / (2.0 * h);
    }
  } else {
    // Second differences of values need a wider stencil than first differences.
    const double base = 10.0 * fd_step;
    const double f0 = value_(q);
    for (int i = 0; i < dim_; ++i) {
      const double hi = scaled_fd_step(q[i], base);
      probe[i] = q[i] + hi;
      const double up = value_(probe);
      probe[i] = q[i] - hi;
      const double down = value_(probe);
      probe[i] = q[i];
      hess(i, i) = (up - 2.0 * f0 + down) / (hi * hi);
      for (int j = 0; j < i; ++j) {
        const double hj = scaled_fd_step(q[j], base);
        auto eval = [&](double si, double sj) {
          probe[i] = q[i] + si * hi;
          probe[j] = q[j] + sj * hj;
          const double v = value_(probe);
          probe[i] = q[i];
          probe[j] = q[j];
          return v;
        };
        hess(i, j) = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * hi * hj);
        hess(j, i) = hess(i, j);
      }
    }
  }
  if (!hess.allFinite()) throw NonFinite("finite-difference hessian is not finite");
  return 0.5 * (hess + hess.transpose());
}

// ---------------------------------------------------------------------------
// Metric fields

MetricFactor factorize_metric(const Matrix& components) {
  if (components.rows() != components.cols()) throw DimensionMismatch("metric components must be square");
  if (!components.allFinite()) throw NonFinite("metric components are not finite");
  const double scale = std::max(1.0, components.cwiseAbs().maxCoeff());
  if ((components - components.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw SingularMatrix("metric components are not symmetric");
  }
  MetricFactor f;
  f.components = components;
  f.llt.compute(components);
  if (f.llt.info() != Eigen::Success) throw SingularMatrix("metric is not positive definite (Cholesky failed)");
  const Vector diag = f.llt.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any()) throw SingularMatrix("metric is not positive definite (Cholesky failed)");
  f.log_det = 2.0 * diag.array().log().sum();
  f.inverse = f.llt.solve(Matrix::Identity(components.rows(), components.cols()));
  f.inverse = 0.5 * (f.inverse + f.inverse.transpose());
  return f;
}

MetricField::MetricField(int dim, ComponentsFn components, DerivativesFn derivatives)
    : dim_(dim), components_(std::move(components)), derivatives_(std::move(derivatives)) {
  if (dim_ < 1) throw DimensionMismatch("metric dimension must be positive");
  if (!components_) throw Error("metric field requires a components function");
}

MetricField MetricField::identity(int dim) { return constant(Matrix::Identity(dim, dim)); }

MetricField MetricField::diagonal(const Vector& diag) { return constant(diag.asDiagonal().toDenseMatrix()); }

MetricField MetricField::constant(Matrix components) {
  MetricFactor factor = factorize_metric(components);
  const int dim = static_cast<int>(components.rows());
  MetricField g(dim, [c = std::move(components)](const Vector&) { return c; });
  g.constant_ = std::move(factor);
  return g;
}

Matrix MetricField::components_at(const Vector& q) const {
  check_dim(q, dim_, "metric");
  if (constant_) return constant_->components;
  return components_(q);
}

std::vector<Matrix> MetricField::derivatives_at(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "metric derivatives");
  if (constant_) return std::vector<Matrix>(dim_, Matrix::Zero(dim_, dim_));
  if (derivatives_) return derivatives_(q);
  std::vector<Matrix> dg;
  dg.reserve(dim_);
  Vector probe = q;
  for (int k = 0; k < dim_; ++k) {
    const double h = scaled_fd_step(q[k], fd_step);
    probe[k] = q[k] + h;
    const Matrix up = components_(probe);
    probe[k] = q[k] - h;
    const Matrix down = components_(probe);
    probe[k] = q[k];
    Matrix d = (up - down) / (2.0 * h);
    if (!d.allFinite()) throw NonFinite("finite-difference metric derivative is not finite");
    dg.push_back(std::move(d));
  }
  return dg;
}

MetricFactor MetricField::factor_at(const Vector& q) const {
  if (constant_) {
    check_dim(q, dim_, "metric");
    return *constant_;
  }
  return factorize_metric(components_at(q));
}

// ---------------------------------------------------------------------------
// Connection

Vector ChristoffelSymbols::contract(const Vector& a, const Vector& b) const {
  Vector out = Vector::Zero(dim_);
  for (int k = 0; k < dim_; ++k) {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
      double row = 0.0;
      for (int j = 0; j < dim_; ++j) row += (*this)(k, i, j) * b[j];
      acc += a[i] * row;
    }
    out[k] = acc;
  }
  return out;
}

Matrix ChristoffelSymbols::contract_upper(const Vector& w) const {
  Matrix out = Matrix::Zero(dim_, dim_);
  for (int k = 0; k < dim_; ++k) {
    if (w[k] == 0.0) continue;
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) out(i, j) += (*this)(k, i, j) * w[k];
  }
  return out;
}

double ChristoffelSymbols::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

namespace {

ChristoffelSymbols christoffel_at(const MetricField& g, const Vector& q, double fd_step) {
  const int d = g.dim();
  ChristoffelSymbols gamma(d);
  if (g.is_constant()) return gamma;
  const Matrix inv = g.factor_at(q).inverse;
  const std::vector<Matrix> dg = g.derivatives_at(q, fd_step);
  // Lowered symbols Gamma_lij = 1/2 (d_i g_jl + d_j g_il - d_l g_ij).
  std::vector<double> lowered(static_cast<std::size_t>(d) * d * d);
  auto low = [&](int l, int i, int j) -> double& { return lowered[(static_cast<std::size_t>(l) * d + i) * d + j]; };
  for (int l = 0; l < d; ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) {
        const double v = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        low(l, i, j) = v;
        low(l, j, i) = v;
      }
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (int l = 0; l < d; ++l) acc += inv(k, l) * low(l, i, j);
        if (!std::isfinite(acc)) throw NonFinite("christoffel symbols are not finite");
        gamma(k, i, j) = acc;
        gamma(k, j, i) = acc;
      }
  return gamma;
}

void require_positive_steps(int n_steps) {
  if (n_steps < 1) throw Error("integration requires n_steps >= 1");
}

// One classical RK4 step for an autonomous system y' = f(y).
template <class F>
Vector rk4_step(const F& f, const Vector& y, double h) {
  const Vector k1 = f(y);
  const Vector k2 = f(y + 0.5 * h * k1);
  const Vector k3 = f(y + 0.5 * h * k2);
  const Vector k4 = f(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Matrix metric_inverse(const MetricField& g, const Point& q) { return g.factor_at(q.coords()).inverse; }

double quadratic_form(const MetricField& g, const TangentVector& v) {
  if (v.dim() != g.dim()) throw DimensionMismatch("quadratic form: vector and metric dimensions differ");
  const Vector& c = v.components();
  return c.dot(g.components_at(v.base().coords()) * c);
}

ChristoffelSymbols christoffel(const MetricField& g, const Point& q, double fd_step) {
  if (q.dim() != g.dim()) throw DimensionMismatch("christoffel: point and metric dimensions differ");
  if (!(fd_step > 0.0)) throw Error("christoffel: fd_step must be positive");
  return christoffel_at(g, q.coords(), fd_step);
}

TangentVector geodesic_flow(const MetricField& g, const TangentVector& state, double t, int n_steps, double fd_step) {
  require_positive_steps(n_steps);
  if (state.dim() != g.dim()) throw DimensionMismatch("geodesic flow: state and metric dimensions differ");
  const Vector& q0 = state.base().coords();
  const Vector& v0 = state.components();
  if (t == 0.0) return state;
  if (g.is_constant()) return TangentVector(Point(Vector(q0 + t * v0)), v0);

  const Eigen::Index d = q0.size();
  auto rhs = [&](const Vector& y) {
    Vector dy(2 * d);
    const Vector q = y.head(d);
    const Vector v = y.tail(d);
    dy.head(d) = v;
    dy.tail(d) = -christoffel_at(g, q, fd_step).contract(v, v);
    return dy;
  };

  Vector y(2 * d);
  y << q0, v0;
  const double h = t / n_steps;
  TangentVector last = state;
  for (int s = 0; s < n_steps; ++s) {
    Vector next;
    try {
      next = rk4_step(rhs, y, h);
    } catch (const Error& e) {
      throw GeodesicDivergence(std::string("geodesic left the chart: ") + e.what(), last);
    }
    if (!next.allFinite()) throw GeodesicDivergence("geodesic left the chart: non-finite state", last);
    y = std::move(next);
    last = TangentVector(Point(Vector(y.head(d))), y.tail(d));
  }
  return last;
}

TangentVector parallel_transport(const MetricField& g, const TangentVector& state, const TangentVector& u, double t,
                                 int n_steps, double fd_step) {
  require_positive_steps(n_steps);
  if (state.dim() != g.dim() || u.dim() != g.dim()) {
    throw DimensionMismatch("parallel transport: dimensions differ");
  }
  if ((u.base().coords() - state.base().coords()).cwiseAbs().maxCoeff() != 0.0) {
    throw Error("parallel transport: transported vector must share the geodesic's base point");
  }
  const Vector& q0 = state.base().coords();
  if (t == 0.0) return u;
  if (g.is_constant()) return TangentVector(Point(Vector(q0 + t * state.components())), u.components());

  const Eigen::Index d = q0.size();
  auto rhs = [&](const Vector& y) {
    Vector dy(3 * d);
    const Vector q = y.head(d);
    const Vector v = y.segment(d, d);
    const Vector w = y.tail(d);
    const ChristoffelSymbols gamma = christoffel_at(g, q, fd_step);
    dy.head(d) = v;
    dy.segment(d, d) = -gamma.contract(v, v);
    dy.tail(d) = -gamma.contract(v, w);
    return dy;
  };

  Vector y(3 * d);
  y << q0, state.components(), u.components();
  const double h = t / n_steps;
  TangentVector last = state;
  for (int s = 0; s < n_steps; ++s) {
    Vector next;
    try {
      next = rk4_step(rhs, y, h);
    } catch (const Error& e) {
      throw GeodesicDivergence(std::string("transport left the chart: ") + e.what(), last);
    }
    if (!next.allFinite()) throw GeodesicDivergence("transport left the chart: non-finite state", last);
    y = std::move(next);
    last = TangentVector(Point(Vector(y.head(d))), y.segment(d, d));
  }
  return TangentVector(last.base(), y.tail(d));
}

Matrix covariant_hessian(const MetricField& g, const ScalarField& f, const Point& q, double fd_step) {
  if (q.dim() != g.dim() || f.dim() != g.dim()) throw DimensionMismatch("covariant hessian: dimensions differ");
  const Vector& x = q.coords();
  const Matrix hess = f.hessian(x, fd_step);
  if (g.is_constant()) return hess;
  const Vector grad = f.gradient(x, fd_step);
  const Matrix result = hess - christoffel_at(g, x, fd_step).contract_upper(grad);
  if (!result.allFinite()) throw NonFinite("covariant hessian is not finite");
  return result;
}

}  // namespace geomcmc
