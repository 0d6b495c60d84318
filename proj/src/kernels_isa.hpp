#pragma once

// Internal declarations for the ISA-specific translation units. Kept free of
// library headers so that nothing inline is compiled with extended ISA flags.

#include <cstddef>

namespace geomcmc::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double sum_scalar(const double* x, std::size_t n);
double sum_squared_deviation_scalar(const double* x, std::size_t n, double shift);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

double dot_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
double sum_squared_deviation_avx2(const double* x, std::size_t n, double shift);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);

double dot_neon(const double* a, const double* b, std::size_t n);
double sum_neon(const double* x, std::size_t n);
double sum_squared_deviation_neon(const double* x, std::size_t n, double shift);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);

}  // namespace geomcmc::kernels::detail
