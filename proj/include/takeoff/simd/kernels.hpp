#pragma once

// Dense double-precision kernels used by the neural layers and the Chebyshev
// wavelet recurrence. Every kernel has a scalar reference implementation and,
// where the CPU allows it, an AVX2+FMA variant. The variant is picked once at
// first use; TAKEOFF_SIMD=scalar in the environment forces the reference path.
//
// All matrices are row-major and densely packed.

#include <cstddef>
#include <span>
#include <string_view>

namespace takeoff::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
                  bool accumulate);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
};

bool isa_supported(Isa isa) noexcept;

/// Best ISA available on this CPU.
Isa detect_isa() noexcept;

const KernelTable& table(Isa isa);

/// Kernel table used by the library.
const KernelTable& active() noexcept;

/// Overrides the active table (tests and benchmarks). Throws if unsupported.
void set_active(Isa isa);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define TAKEOFF_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate);
void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
}  // namespace avx2
#else
#define TAKEOFF_HAVE_AVX2_KERNELS 0
#endif

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace takeoff::simd
