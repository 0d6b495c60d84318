#include "geomcmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geomcmc/kernels.hpp"

namespace geomcmc {

EssEstimate effective_sample_size(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 8) throw ConfigError("effective_sample_size: need at least 8 draws, got " + std::to_string(n));
  const double nd = static_cast<double>(n);
  const double mean = kernels::sum(draws) / nd;
  std::vector<double> centered(draws.begin(), draws.end());
  for (double& x : centered) x -= mean;
  const double gamma0 = kernels::lagged_product_sum(centered, 0) / nd;
  if (!(gamma0 > 0.0)) return {nd, true};

  auto rho = [&](std::size_t lag) { return kernels::lagged_product_sum(centered, lag) / nd / gamma0; };

  // Pair sums Gamma_m = rho_2m + rho_2m+1 are positive and decreasing for a
  // reversible chain; stop at the first non-positive one and force
  // monotonicity on the rest.
  double tau = -1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = rho(2 * m) + rho(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    tau += 2.0 * pair;
    previous = pair;
  }
  // Antithetic chains can make tau small or even negative; the cap at N covers both.
  return {tau <= 1.0 ? nd : nd / tau, false};
}

ChainSummary summarize(const ChainOutput& chain, const DeviationTensor* delta, int stride) {
  ChainSummary s;
  const std::size_t n = chain.size();
  s.n_samples = n;
  if (n == 0) return s;
  const Eigen::Index dim = chain.draws.cols();
  const double nd = static_cast<double>(n);
  s.mean.resize(dim);
  s.var.resize(dim);
  s.ess.resize(dim);
  s.ess_degenerate.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const std::span<const double> col(chain.draws.col(j).data(), n);
    s.mean[j] = kernels::sum(col) / nd;
    s.var[j] = n > 1 ? kernels::sum_squared_deviation(col, s.mean[j]) / (nd - 1.0)
                     : std::numeric_limits<double>::quiet_NaN();
    if (n >= 8) {
      const EssEstimate e = effective_sample_size(col);
      s.ess[j] = e.ess;
      s.ess_degenerate[j] = e.degenerate;
    } else {
      s.ess[j] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  s.accept_rate = static_cast<double>(std::count(chain.accepted.begin(), chain.accepted.end(), true)) / nd;
  s.n_divergent = chain.divergences;

  if (delta != nullptr) {
    const std::size_t step = static_cast<std::size_t>(std::max(stride, 1));
    double total = 0.0;
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; i += step) {
      const double d = delta->scalar_at(Point(Vector(chain.draws.row(i).transpose())));
      total += d;
      worst = std::max(worst, d);
      ++count;
    }
    s.delta_mean = total / static_cast<double>(count);
    s.delta_max = worst;
  }
  return s;
}

namespace {

nlohmann::ordered_json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json array_of(const std::vector<double>& xs) {
  auto out = nlohmann::ordered_json::array();
  for (double x : xs) out.push_back(number_or_null(x));
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const ChainSummary& s) {
  nlohmann::ordered_json j;
  j["n_samples"] = s.n_samples;
  j["mean"] = array_of(s.mean);
  j["var"] = array_of(s.var);
  j["ess"] = array_of(s.ess);
  j["accept_rate"] = number_or_null(s.accept_rate);
  j["n_divergent"] = s.n_divergent;
  if (s.delta_mean) j["delta_mean"] = number_or_null(*s.delta_mean);
  if (s.delta_max) j["delta_max"] = number_or_null(*s.delta_max);
  return j;
}

}  // namespace geomcmc
