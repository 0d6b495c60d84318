#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "geomcmc/reparam.hpp"
#include "geomcmc/targets.hpp"
#include "test_support.hpp"

namespace {

using namespace geomcmc;
using geomcmc::testgen::Gen;
using geomcmc::testgen::max_abs_diff;

FunnelSpec funnel(int n, Parameterization p, double s_mu = 1.0, double s_lambda = 1.0) {
  FunnelSpec spec;
  spec.n_individuals = n;
  spec.mu_prior_scale = s_mu;
  spec.lambda_prior_scale = s_lambda;
  spec.parameterization = p;
  return spec;
}

TEST(CenteredFunnel, HandValues) {
  const auto spec = funnel(1, Parameterization::centered);
  EXPECT_EQ(centered_funnel_logpdf(spec, Point{0.0, 0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(centered_funnel_logpdf(spec, Point{0.0, 0.0, 1.0}), -0.5);
  EXPECT_DOUBLE_EQ(centered_funnel_logpdf(spec, Point{1.0, 1.0, 1.0}), -2.0);
}

TEST(CenteredFunnel, MatchesWrittenFormula) {
  Gen gen(20);
  for (int trial = 0; trial < 100; ++trial) {
    const double mu = gen.normal(), lambda = gen.normal(), theta = gen.normal();
    const double z = (theta - mu) / std::exp(lambda);
    const double want = -0.5 * z * z - lambda - 0.5 * mu * mu - 0.5 * lambda * lambda;
    EXPECT_NEAR(centered_funnel_logpdf(funnel(1, Parameterization::centered), Point{mu, lambda, theta}), want,
                1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST(NoncenteredFunnel, HandValues) {
  const auto spec = funnel(1, Parameterization::non_centered);
  EXPECT_EQ(noncentered_funnel_logpdf(spec, Point{0.0, 0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(noncentered_funnel_logpdf(spec, Point{0.0, 0.0, 2.0}), -2.0);
}

TEST(Funnel, PriorScales) {
  const auto spec = funnel(2, Parameterization::centered, 2.0, 0.5);
  // -1/2 (mu/2)^2 - 1/2 (lambda/0.5)^2 at theta = mu
  EXPECT_DOUBLE_EQ(centered_funnel_logpdf(spec, Point{2.0, 0.5, 2.0, 2.0}), -0.5 - 0.5 - 2.0 * 0.5);
  const auto nc = funnel(2, Parameterization::non_centered, 2.0, 0.5);
  EXPECT_DOUBLE_EQ(noncentered_funnel_logpdf(nc, Point{2.0, 0.5, 1.0, 1.0}), -0.5 - 0.5 - 1.0);
}

TEST(Funnel, DimensionMismatch) {
  EXPECT_THROW(centered_funnel_logpdf(funnel(2, Parameterization::centered), Point{0.0, 0.0, 0.0}), DimensionMismatch);
  EXPECT_THROW(noncentered_funnel_logpdf(funnel(1, Parameterization::non_centered), Point{0.0, 0.0}), DimensionMismatch);
}

TEST(Funnel, SpecValidation) {
  EXPECT_THROW(funnel_target(funnel(0, Parameterization::centered)), ConfigError);
  EXPECT_THROW(funnel_target(funnel(1, Parameterization::centered, 0.0)), ConfigError);
  EXPECT_THROW(funnel_target(funnel(1, Parameterization::centered, 1.0, -1.0)), ConfigError);
  EXPECT_EQ(funnel_target(funnel(3, Parameterization::centered)).dim(), 5);
  EXPECT_EQ(funnel_target(funnel(3, Parameterization::centered)).name(), "funnel-centered");
  EXPECT_EQ(funnel_target(funnel(3, Parameterization::non_centered)).name(), "funnel-noncentered");
}

TEST(Funnel, ChangeOfVariablesBetweenParameterizations) {
  Gen gen(21);
  for (int n : {1, 3, 10}) {
    const auto c = funnel(n, Parameterization::centered, 1.3, 0.8);
    const auto nc = funnel(n, Parameterization::non_centered, 1.3, 0.8);
    const auto psi = noncentering_reparam(c);
    for (int trial = 0; trial < 100; ++trial) {
      const Vector q = gen.funnel_point(n);
      const double lhs = noncentered_funnel_logpdf(nc, psi.forward(Point(q)));
      // log|J^-1| = N lambda
      const double rhs = centered_funnel_logpdf(c, Point(q)) - psi.log_abs_det_jacobian_at(q);
      EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs))) << "N=" << n;
    }
  }
}

TEST(Funnel, ExchangeableInIndividuals) {
  Gen gen(22);
  for (auto p : {Parameterization::centered, Parameterization::non_centered}) {
    const auto spec = funnel(6, p);
    const auto target = funnel_target(spec);
    for (int trial = 0; trial < 50; ++trial) {
      Vector q = gen.funnel_point(6);
      const double before = target.log_density(q);
      std::shuffle(q.data() + 2, q.data() + q.size(), gen.engine());
      EXPECT_NEAR(target.log_density(q), before, 1e-12 * std::max(1.0, std::abs(before)));
    }
  }
}

TEST(Gaussian, HandValues) {
  const auto std1 = gaussian_target(Vector::Zero(1), Matrix::Identity(1, 1));
  EXPECT_EQ(std1.log_density(Vector::Zero(1)), 0.0);
  EXPECT_DOUBLE_EQ(std1.gradient(Vector::Constant(1, 3.0))[0], -3.0);
  const auto wide = gaussian_target(Vector::Zero(1), Matrix::Constant(1, 1, 4.0));
  EXPECT_DOUBLE_EQ(wide.log_density(Vector::Constant(1, 2.0)), -0.5);
}

TEST(Gaussian, RejectsBadCovariance) {
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW(gaussian_target(Vector::Zero(2), bad), SingularMatrix);
  EXPECT_THROW(gaussian_target(Vector::Zero(3), Matrix::Identity(2, 2)), DimensionMismatch);
  ModelSpec m;
  m.name = "gaussian";
  m.mean = Vector::Zero(2);
  m.covariance = bad;
  EXPECT_THROW(make_target(m), ConfigError);
}

TEST(Registry, NamesAndLookup) {
  EXPECT_EQ(model_names(), (std::vector<std::string>{"funnel-centered", "funnel-noncentered", "gaussian"}));
  ModelSpec m;
  m.name = "funnel-noncentered";
  m.funnel.n_individuals = 2;
  const auto t = make_target(m);
  EXPECT_EQ(t.name(), "funnel-noncentered");
  EXPECT_EQ(t.dim(), 4);
  m.name = "banana";
  EXPECT_THROW(make_target(m), ConfigError);
}

// Derivative oracles of every bundled target against central differences of
// the log density alone.
void check_derivatives(const TargetDensity& target, const Vector& q) {
  const ScalarField value_only(target.dim(), [&](const Vector& x) { return target.log_density(x); });
  const Vector grad = target.gradient(q);
  const Vector fd_grad = value_only.gradient(q);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    EXPECT_NEAR(fd_grad[i], grad[i], 1e-5 * std::max(1.0, std::abs(grad[i]))) << target.name() << " i=" << i;
  }
  const Matrix hess = target.hessian(q);
  EXPECT_LT(max_abs_diff(hess, hess.transpose()), 1e-10);
  const ScalarField gradient_only(
      target.dim(), [&](const Vector& x) { return target.log_density(x); },
      [&](const Vector& x) { return target.gradient(x); });
  const Matrix fd_hess = gradient_only.hessian(q);
  for (Eigen::Index i = 0; i < q.size(); ++i)
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      EXPECT_NEAR(fd_hess(i, j), hess(i, j), 1e-4 * std::max(1.0, std::abs(hess(i, j))))
          << target.name() << " (" << i << "," << j << ")";
    }
}

TEST(TargetDerivatives, FunnelsAgreeWithFiniteDifferences) {
  Gen gen(23);
  for (int n : {1, 3}) {
    for (auto p : {Parameterization::centered, Parameterization::non_centered}) {
      const auto target = funnel_target(funnel(n, p, 1.7, 0.6));
      for (int trial = 0; trial < 50; ++trial) check_derivatives(target, gen.funnel_point(n));
    }
  }
}

TEST(TargetDerivatives, GaussianAgreesWithFiniteDifferences) {
  Gen gen(24);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = gen.integer(1, 5);
    const auto target = gaussian_target(gen.normal_vector(d), gen.spd(d));
    check_derivatives(target, gen.normal_vector(d));
  }
}

}  // namespace
