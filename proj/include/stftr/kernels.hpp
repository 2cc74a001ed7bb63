#pragma once

// Dense real arithmetic kernels used by the solver hot loops.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, a SIMD variant (AVX2+FMA on x86-64, NEON on AArch64). The
// variant is chosen once at first use from the CPU feature bits; the
// STFTR_KERNELS environment variable ("scalar", "avx2", "neon") overrides the
// choice. Reductions use a fixed lane/accumulator order so a given variant is
// bit-reproducible run to run.

#include <cstddef>
#include <span>
#include <string_view>

namespace stftr::kernels {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  const char* name;
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum_sq)(const double* x, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*scale)(double a, double* x, std::size_t n);
  // c[rows x cols] += a[rows x inner] * b[inner x cols]; all row-major with
  // explicit leading dimensions.
  void (*gemm_acc)(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                   std::size_t ldc, std::size_t rows, std::size_t inner, std::size_t cols);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table in use. Thread-safe; resolved on first call.
const KernelTable& active();

// Pin the active table (tests, benchmarking). Returns false when the ISA is
// unavailable, leaving the selection unchanged.
bool select(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum_sq(std::span<const double> x) { return active().sum_sq(x.data(), x.size()); }
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void scale(double a, std::span<double> x) { active().scale(a, x.data(), x.size()); }

}  // namespace stftr::kernels
