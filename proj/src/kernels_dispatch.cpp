#include "geomcmc/kernels.hpp"

#include <atomic>
#include <stdexcept>

#include "kernels_isa.hpp"

namespace geomcmc::kernels {
namespace {

constexpr KernelTable kScalar{
    &detail::dot_scalar,
    &detail::sum_scalar,
    &detail::sum_squared_deviation_scalar,
    &detail::axpy_scalar,
};

#if defined(GEOMCMC_HAVE_AVX2)
constexpr KernelTable kAvx2{
    &detail::dot_avx2,
    &detail::sum_avx2,
    &detail::sum_squared_deviation_avx2,
    &detail::axpy_avx2,
};
#endif

#if defined(GEOMCMC_HAVE_NEON)
constexpr KernelTable kNeon{
    &detail::dot_neon,
    &detail::sum_neon,
    &detail::sum_squared_deviation_neon,
    &detail::axpy_neon,
};
#endif

bool host_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(GEOMCMC_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(GEOMCMC_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::avx2:
      return avx2_table();
    case Isa::neon:
      return neon_table();
    case Isa::scalar:
      break;
  }
  return &kScalar;
}

struct Dispatch {
  std::atomic<const KernelTable*> table;
  std::atomic<Isa> isa;

  Dispatch() {
    const Isa best = detected_isa();
    table.store(table_for(best));
    isa.store(best);
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

const KernelTable& active() { return *dispatch().table.load(std::memory_order_relaxed); }

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("kernels: span lengths differ");
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

Isa detected_isa() {
  if (host_supports(Isa::avx2)) return Isa::avx2;
  if (host_supports(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() { return dispatch().isa.load(); }

Isa force_isa(Isa isa) {
  const Isa chosen = host_supports(isa) ? isa : Isa::scalar;
  dispatch().table.store(table_for(chosen));
  dispatch().isa.store(chosen);
  return chosen;
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(GEOMCMC_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(GEOMCMC_HAVE_NEON)
  return &kNeon;
#else
  return nullptr;
#endif
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double sum_squared_deviation(std::span<const double> x, double shift) {
  return active().sum_squared_deviation(x.data(), x.size(), shift);
}

double lagged_product_sum(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) return 0.0;
  const std::size_t n = x.size() - lag;
  return active().dot(x.data(), x.data() + lag, n);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_length(x.size(), y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace geomcmc::kernels
