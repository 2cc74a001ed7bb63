#pragma once

#include <cstddef>

namespace stftr::kernels::detail {

double dot_scalar(const double* x, const double* y, std::size_t n);
double sum_sq_scalar(const double* x, std::size_t n);
void axpy_scalar(double a, const double* x, double* y, std::size_t n);
void scale_scalar(double a, double* x, std::size_t n);
void gemm_acc_scalar(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                     std::size_t ldc, std::size_t rows, std::size_t inner, std::size_t cols);

#if defined(__x86_64__) || defined(_M_X64)
#define STFTR_HAVE_AVX2_VARIANT 1
double dot_avx2(const double* x, const double* y, std::size_t n);
double sum_sq_avx2(const double* x, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
void scale_avx2(double a, double* x, std::size_t n);
void gemm_acc_avx2(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                   std::size_t ldc, std::size_t rows, std::size_t inner, std::size_t cols);
#endif

#if defined(__aarch64__)
#define STFTR_HAVE_NEON_VARIANT 1
double dot_neon(const double* x, const double* y, std::size_t n);
double sum_sq_neon(const double* x, std::size_t n);
void axpy_neon(double a, const double* x, double* y, std::size_t n);
void scale_neon(double a, double* x, std::size_t n);
void gemm_acc_neon(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                   std::size_t ldc, std::size_t rows, std::size_t inner, std::size_t cols);
#endif

}  // namespace stftr::kernels::detail
