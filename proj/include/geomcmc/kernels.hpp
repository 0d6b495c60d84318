#pragma once

// Data-parallel reductions used by the diagnostics and the funnel targets.
//
// Every kernel has a portable scalar reference implementation and, where the
// build target allows, a SIMD variant (AVX2+FMA on x86-64, NEON on AArch64).
// The variant is chosen once at runtime from the host CPU features; results
// agree with the scalar reference up to floating-point reassociation.

#include <cstddef>
#include <span>
#include <string_view>

namespace geomcmc::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// Instruction set currently used by the dispatching entry points below.
Isa active_isa();

/// Best instruction set supported by both the build and the host CPU.
Isa detected_isa();

/// Overrides dispatch (tests and benchmarking). Requesting an ISA the host
/// cannot run falls back to scalar; the ISA actually selected is returned.
Isa force_isa(Isa isa);

/// Sum of a[i] * b[i]. Spans must have equal length.
double dot(std::span<const double> a, std::span<const double> b);

/// Sum of x[i].
double sum(std::span<const double> x);

/// Sum of (x[i] - shift)^2.
double sum_squared_deviation(std::span<const double> x, double shift);

/// Sum of x[i] * x[i + lag] for i in [0, n - lag).
double lagged_product_sum(std::span<const double> x, std::size_t lag);

/// y[i] += alpha * x[i].
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Raw per-ISA entry points, exposed for equivalence testing.
struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sum_squared_deviation)(const double*, std::size_t, double);
  void (*axpy)(double, const double*, double*, std::size_t);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace geomcmc::kernels
