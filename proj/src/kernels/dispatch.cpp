#include "stftr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace stftr::kernels {

namespace {

const KernelTable kScalar{Isa::scalar,          "scalar",
                          detail::dot_scalar,   detail::sum_sq_scalar,
                          detail::axpy_scalar,  detail::scale_scalar,
                          detail::gemm_acc_scalar};

#if defined(STFTR_HAVE_AVX2_VARIANT)
const KernelTable kAvx2{Isa::avx2,          "avx2",
                        detail::dot_avx2,   detail::sum_sq_avx2,
                        detail::axpy_avx2,  detail::scale_avx2,
                        detail::gemm_acc_avx2};
#endif

#if defined(STFTR_HAVE_NEON_VARIANT)
const KernelTable kNeon{Isa::neon,          "neon",
                        detail::dot_neon,   detail::sum_sq_neon,
                        detail::axpy_neon,  detail::scale_neon,
                        detail::gemm_acc_neon};
#endif

const KernelTable* resolve_default() {
  if (const char* env = std::getenv("STFTR_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && avx2_table()) return avx2_table();
    if (want == "neon" && neon_table()) return neon_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{resolve_default()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(STFTR_HAVE_AVX2_VARIANT)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(STFTR_HAVE_NEON_VARIANT)
  return &kNeon;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool select(Isa isa) {
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::scalar: t = &kScalar; break;
    case Isa::avx2: t = avx2_table(); break;
    case Isa::neon: t = neon_table(); break;
  }
  if (!t) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

}  // namespace stftr::kernels
