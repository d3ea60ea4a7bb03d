#include <atomic>
#include <cstdlib>
#include <string>

#include "takeoff/error.hpp"
#include "takeoff/simd/kernels.hpp"

namespace takeoff::simd {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, scalar::dot, scalar::axpy, scalar::gemm_nt, scalar::gemm_nn_acc,
                              scalar::gemm_tn_acc};
#if TAKEOFF_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2{Isa::Avx2, avx2::dot, avx2::axpy, avx2::gemm_nt, avx2::gemm_nn_acc, avx2::gemm_tn_acc};
#endif

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("TAKEOFF_SIMD"); env && std::string(env) == "scalar") return &kScalar;
  return &table(detect_isa());
}

std::atomic<const KernelTable*>& active_slot() noexcept {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if TAKEOFF_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() noexcept { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) throw InvalidArgument("SIMD variant not supported on this CPU: " + std::string(isa_name(isa)));
#if TAKEOFF_HAVE_AVX2_KERNELS
  if (isa == Isa::Avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_relaxed); }

}  // namespace takeoff::simd
