#pragma once

// Chain quality summaries: moments, effective sample size, acceptance,
// divergences and, optionally, the optimality deviation along the chain.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "geomcmc/reparam.hpp"
#include "geomcmc/samplers.hpp"

namespace geomcmc {

struct EssEstimate {
  double ess = 0.0;
  bool degenerate = false;  // zero-variance input; ess is then N
};

/// ESS = N / (1 + 2 sum_k rho_k), truncated by Geyer's initial monotone
/// sequence rule and capped at N. Throws ConfigError for fewer than 8 draws.
EssEstimate effective_sample_size(std::span<const double> draws);

struct ChainSummary {
  std::size_t n_samples = 0;
  std::vector<double> mean;
  std::vector<double> var;  // unbiased (n - 1)
  std::vector<double> ess;  // NaN when the chain is shorter than 8 draws
  std::vector<bool> ess_degenerate;
  double accept_rate = 0.0;
  int n_divergent = 0;
  std::optional<double> delta_mean;  // |det Delta| over every stride-th draw
  std::optional<double> delta_max;

  bool empty() const noexcept { return n_samples == 0; }
};

inline constexpr int kDefaultDeltaStride = 10;

ChainSummary summarize(const ChainOutput& chain, const DeviationTensor* delta = nullptr,
                       int stride = kDefaultDeltaStride);

/// Keys: n_samples, mean, var, ess, accept_rate, n_divergent and, when
/// available, delta_mean and delta_max. NaN is written as null.
nlohmann::ordered_json to_json(const ChainSummary& s);

}  // namespace geomcmc
