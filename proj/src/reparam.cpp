#include "geomcmc/reparam.hpp"

#include <cmath>

namespace geomcmc {
namespace {

void check_dim(const Vector& q, int dim, const char* what) {
  if (q.size() != dim) throw DimensionMismatch(std::string(what) + ": dimension mismatch");
}

Eigen::PartialPivLU<Matrix> invertible_lu(const Matrix& j) {
  Eigen::PartialPivLU<Matrix> lu(j);
  const double det = lu.determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw SingularMatrix("jacobian is singular");
  return lu;
}

}  // namespace

Reparameterization::Reparameterization(std::string name, int dim, Maps maps)
    : name_(std::move(name)), dim_(dim), maps_(std::move(maps)) {
  if (dim_ < 1) throw DimensionMismatch("reparameterization dimension must be positive");
  if (!maps_.forward || !maps_.inverse) throw Error("reparameterization requires forward and inverse maps");
}

Reparameterization Reparameterization::identity(int dim) {
  Maps maps;
  maps.forward = [](const Vector& q) { return q; };
  maps.inverse = [](const Vector& q) { return q; };
  maps.jacobian = [dim](const Vector&) { return Matrix(Matrix::Identity(dim, dim)); };
  maps.log_abs_det_jacobian = [](const Vector&) { return 0.0; };
  maps.jacobian_derivatives = [dim](const Vector&) {
    return std::vector<Matrix>(dim, Matrix::Zero(dim, dim));
  };
  return Reparameterization("identity", dim, std::move(maps));
}

Reparameterization Reparameterization::affine(Matrix a, Vector b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) throw DimensionMismatch("affine map: shape mismatch");
  const auto lu = invertible_lu(a);
  const Matrix a_inv = lu.inverse();
  const double log_det = std::log(std::abs(lu.determinant()));
  const int dim = static_cast<int>(a.rows());
  Maps maps;
  maps.forward = [a, b](const Vector& q) { return Vector(a * q + b); };
  maps.inverse = [a_inv, b](const Vector& q) { return Vector(a_inv * (q - b)); };
  maps.jacobian = [a](const Vector&) { return a; };
  maps.log_abs_det_jacobian = [log_det](const Vector&) { return log_det; };
  maps.jacobian_derivatives = [dim](const Vector&) {
    return std::vector<Matrix>(dim, Matrix::Zero(dim, dim));
  };
  return Reparameterization("affine", dim, std::move(maps));
}

Point Reparameterization::forward(const Point& q) const { return Point(forward(q.coords())); }
Point Reparameterization::inverse(const Point& q) const { return Point(inverse(q.coords())); }

Vector Reparameterization::forward(const Vector& q) const {
  check_dim(q, dim_, "reparameterization forward");
  return maps_.forward(q);
}

Vector Reparameterization::inverse(const Vector& q) const {
  check_dim(q, dim_, "reparameterization inverse");
  return maps_.inverse(q);
}

Matrix Reparameterization::jacobian_at(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "reparameterization jacobian");
  if (maps_.jacobian) return maps_.jacobian(q);
  Matrix jac(dim_, dim_);
  Vector probe = q;
  for (int j = 0; j < dim_; ++j) {
    const double h = scaled_fd_step(q[j], fd_step);
    probe[j] = q[j] + h;
    const Vector up = maps_.forward(probe);
    probe[j] = q[j] - h;
    const Vector down = maps_.forward(probe);
    probe[j] = q[j];
    jac.col(j) = (up - down) / (2.0 * h);
  }
  if (!jac.allFinite()) throw NonFinite("finite-difference jacobian is not finite");
  return jac;
}

double Reparameterization::log_abs_det_jacobian_at(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "reparameterization log-determinant");
  if (maps_.log_abs_det_jacobian) return maps_.log_abs_det_jacobian(q);
  const Eigen::PartialPivLU<Matrix> lu(jacobian_at(q, fd_step));
  return std::log(std::abs(lu.determinant()));
}

std::vector<Matrix> Reparameterization::jacobian_derivatives_at(const Vector& q, double fd_step) const {
  check_dim(q, dim_, "reparameterization jacobian derivatives");
  if (maps_.jacobian_derivatives) return maps_.jacobian_derivatives(q);
  std::vector<Matrix> dj;
  dj.reserve(dim_);
  Vector probe = q;
  for (int k = 0; k < dim_; ++k) {
    const double h = scaled_fd_step(q[k], fd_step);
    probe[k] = q[k] + h;
    const Matrix up = jacobian_at(probe, fd_step);
    probe[k] = q[k] - h;
    const Matrix down = jacobian_at(probe, fd_step);
    probe[k] = q[k];
    dj.push_back((up - down) / (2.0 * h));
  }
  return dj;
}

// ---------------------------------------------------------------------------

Reparameterization noncentering_reparam(const FunnelSpec& spec) {
  spec.validate();
  const int n = spec.n_individuals;
  const int dim = spec.dim();
  Reparameterization::Maps maps;
  maps.forward = [n](const Vector& q) {
    Vector out = q;
    out.tail(n) = (q.tail(n).array() - q[0]) * std::exp(-q[1]);
    return out;
  };
  maps.inverse = [n](const Vector& q) {
    Vector out = q;
    out.tail(n) = q[0] + std::exp(q[1]) * q.tail(n).array();
    return out;
  };
  maps.jacobian = [n, dim](const Vector& q) {
    const double s = std::exp(-q[1]);
    Matrix j = Matrix::Identity(dim, dim);
    for (int i = 0; i < n; ++i) {
      const int r = 2 + i;
      j(r, 0) = -s;
      j(r, 1) = -(q[r] - q[0]) * s;
      j(r, r) = s;
    }
    return j;
  };
  maps.log_abs_det_jacobian = [n](const Vector& q) { return -static_cast<double>(n) * q[1]; };
  maps.jacobian_derivatives = [n, dim](const Vector& q) {
    const double s = std::exp(-q[1]);
    std::vector<Matrix> dj(dim, Matrix::Zero(dim, dim));
    for (int i = 0; i < n; ++i) {
      const int r = 2 + i;
      dj[0](r, 1) = s;
      dj[1](r, 0) = s;
      dj[1](r, 1) = (q[r] - q[0]) * s;
      dj[1](r, r) = -s;
      dj[r](r, 1) = -s;
    }
    return dj;
  };
  return Reparameterization("noncentering", dim, std::move(maps));
}

const std::vector<std::string>& reparam_names() {
  static const std::vector<std::string> names{"identity", "noncentering"};
  return names;
}

Reparameterization make_reparam(const std::string& name, const FunnelSpec& spec, int dim) {
  if (name == "identity") return Reparameterization::identity(dim);
  if (name == "noncentering") {
    if (spec.dim() != dim) throw ConfigError("reparam 'noncentering' requires a funnel model");
    return noncentering_reparam(spec);
  }
  throw ConfigError("metric.reparam: unknown reparameterization '" + name + "'");
}

// ---------------------------------------------------------------------------

TargetDensity pushforward_density(const TargetDensity& target, const Reparameterization& psi) {
  if (target.dim() != psi.dim()) throw DimensionMismatch("pushforward density: dimensions differ");
  auto value = [target, psi](const Vector& qp) {
    const Vector q = psi.inverse(qp);
    return target.log_density(q) - psi.log_abs_det_jacobian_at(q);
  };
  // grad' = J^-T (grad log pi - grad log|J|),  d_k log|J| = tr(J^-1 d_k J)
  auto gradient = [target, psi](const Vector& qp) {
    const Vector q = psi.inverse(qp);
    const Matrix j = psi.jacobian_at(q);
    const auto lu = invertible_lu(j);
    const std::vector<Matrix> dj = psi.jacobian_derivatives_at(q);
    Vector grad_logdet(q.size());
    for (Eigen::Index k = 0; k < q.size(); ++k) grad_logdet[k] = lu.solve(dj[k]).trace();
    return Vector(lu.transpose().solve(Vector(target.gradient(q) - grad_logdet)));
  };
  return TargetDensity(target.name() + "@" + psi.name(), ScalarField(target.dim(), value, gradient));
}

TangentVector pushforward_tangent(const Reparameterization& psi, const TangentVector& v) {
  if (v.dim() != psi.dim()) throw DimensionMismatch("pushforward tangent: dimensions differ");
  const Vector& q = v.base().coords();
  return TangentVector(psi.forward(v.base()), psi.jacobian_at(q) * v.components());
}

CotangentVector pullback_cotangent(const Reparameterization& psi, const CotangentVector& p) {
  if (p.dim() != psi.dim()) throw DimensionMismatch("pullback cotangent: dimensions differ");
  const Vector& q = p.base().coords();
  const auto lu = invertible_lu(psi.jacobian_at(q));
  return CotangentVector(psi.forward(p.base()), lu.transpose().solve(p.components()));
}

Matrix tangent_bundle_jacobian(const Reparameterization& psi, const TangentVector& v) {
  const Vector& q = v.base().coords();
  const Eigen::Index d = q.size();
  const Matrix j = psi.jacobian_at(q);
  const std::vector<Matrix> dj = psi.jacobian_derivatives_at(q);
  Matrix out = Matrix::Zero(2 * d, 2 * d);
  out.topLeftCorner(d, d) = j;
  out.bottomRightCorner(d, d) = j;
  for (Eigen::Index k = 0; k < d; ++k) out.block(d, k, d, 1) = dj[k] * v.components();
  return out;
}

Matrix cotangent_bundle_jacobian(const Reparameterization& psi, const CotangentVector& p) {
  const Vector& q = p.base().coords();
  const Eigen::Index d = q.size();
  const Matrix j = psi.jacobian_at(q);
  const auto lu = invertible_lu(j);
  const Matrix j_inv_t = lu.inverse().transpose();
  const std::vector<Matrix> dj = psi.jacobian_derivatives_at(q);
  const Vector p_new = j_inv_t * p.components();
  Matrix out = Matrix::Zero(2 * d, 2 * d);
  out.topLeftCorner(d, d) = j;
  out.bottomRightCorner(d, d) = j_inv_t;
  // d(J^-T p)/dq^k = -J^-T (d_k J)^T J^-T p
  for (Eigen::Index k = 0; k < d; ++k) out.block(d, k, d, 1) = -j_inv_t * (dj[k].transpose() * p_new);
  return out;
}

MetricField equivalent_metric(const MetricField& g, const Reparameterization& psi) {
  if (g.dim() != psi.dim()) throw DimensionMismatch("equivalent metric: dimensions differ");
  auto components = [g, psi](const Vector& q) {
    const Matrix j = psi.jacobian_at(q);
    const Matrix gbar = j.transpose() * g.components_at(psi.forward(q)) * j;
    return Matrix(0.5 * (gbar + gbar.transpose()));
  };
  if (!g.has_analytic_derivatives() || !psi.has_analytic_jacobian()) {
    return MetricField(g.dim(), components);
  }
  // d_k gbar = (d_k J)^T G J + J^T G (d_k J) + J^T (sum_n d_n G J^n_k) J
  auto derivatives = [g, psi](const Vector& q) {
    const Vector x = psi.forward(q);
    const Matrix j = psi.jacobian_at(q);
    const Matrix gx = g.components_at(x);
    const std::vector<Matrix> dj = psi.jacobian_derivatives_at(q);
    const std::vector<Matrix> dgx = g.derivatives_at(x);
    const Eigen::Index d = q.size();
    const bool flat = g.is_constant();
    std::vector<Matrix> out;
    out.reserve(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const Matrix half = dj[k].transpose() * gx * j;
      Matrix dk = half + half.transpose();
      if (!flat) {
        Matrix chain = Matrix::Zero(d, d);
        for (Eigen::Index n = 0; n < d; ++n) chain += dgx[n] * j(n, k);
        dk += j.transpose() * chain * j;
      }
      out.push_back(std::move(dk));
    }
    return out;
  };
  return MetricField(g.dim(), components, derivatives);
}

// ---------------------------------------------------------------------------

DeviationTensor::DeviationTensor(MetricField metric, TargetDensity target, double fd_step)
    : metric_(std::move(metric)), target_(std::move(target)), fd_step_(fd_step) {
  if (metric_.dim() != target_.dim()) throw DimensionMismatch("deviation: metric and target dimensions differ");
}

Matrix DeviationTensor::at(const Point& q) const {
  return metric_.components_at(q.coords()) + covariant_hessian(metric_, target_.field(), q, fd_step_);
}

double DeviationTensor::scalar_at(const Point& q) const { return std::abs(at(q).determinant()); }

double DeviationTensor::max_abs_at(const Point& q) const { return at(q).cwiseAbs().maxCoeff(); }

DeviationTensor deviation(const MetricField& g_eff, const TargetDensity& target, double fd_step) {
  return DeviationTensor(g_eff, target, fd_step);
}

}  // namespace geomcmc
