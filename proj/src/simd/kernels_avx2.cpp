#include "takeoff/simd/kernels.hpp"

#if TAKEOFF_HAVE_AVX2_KERNELS

#include <immintrin.h>

#pragma GCC push_options
#pragma GCC target("avx2,fma")

namespace takeoff::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// c[0..n) += sum_p w[p * w_stride] * b[p * n .. p * n + n)
inline void accumulate_rows(const double* w, std::size_t w_stride, const double* b, double* c, std::size_t n,
                            std::size_t k) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    __m256d c1 = _mm256_loadu_pd(c + j + 4);
    __m256d c2 = _mm256_loadu_pd(c + j + 8);
    __m256d c3 = _mm256_loadu_pd(c + j + 12);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d wp = _mm256_set1_pd(w[p * w_stride]);
      const double* row = b + p * n + j;
      c0 = _mm256_fmadd_pd(wp, _mm256_loadu_pd(row), c0);
      c1 = _mm256_fmadd_pd(wp, _mm256_loadu_pd(row + 4), c1);
      c2 = _mm256_fmadd_pd(wp, _mm256_loadu_pd(row + 8), c2);
      c3 = _mm256_fmadd_pd(wp, _mm256_loadu_pd(row + 12), c3);
    }
    _mm256_storeu_pd(c + j, c0);
    _mm256_storeu_pd(c + j + 4, c1);
    _mm256_storeu_pd(c + j + 8, c2);
    _mm256_storeu_pd(c + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    for (std::size_t p = 0; p < k; ++p) {
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(w[p * w_stride]), _mm256_loadu_pd(b + p * n + j), c0);
    }
    _mm256_storeu_pd(c + j, c0);
  }
  for (; j < n; ++j) {
    double s = c[j];
    for (std::size_t p = 0; p < k; ++p) s += w[p * w_stride] * b[p * n + j];
    c[j] = s;
  }
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  if (i + 4 <= n) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
             bool accumulate) {
  const std::size_t k4 = k & ~std::size_t{3};
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd();
      __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k4; p += 4) {
        const __m256d va0 = _mm256_loadu_pd(a0 + p);
        const __m256d va1 = _mm256_loadu_pd(a1 + p);
        const __m256d vb0 = _mm256_loadu_pd(b0 + p);
        const __m256d vb1 = _mm256_loadu_pd(b1 + p);
        s00 = _mm256_fmadd_pd(va0, vb0, s00);
        s01 = _mm256_fmadd_pd(va0, vb1, s01);
        s10 = _mm256_fmadd_pd(va1, vb0, s10);
        s11 = _mm256_fmadd_pd(va1, vb1, s11);
      }
      double r00 = hsum(s00), r01 = hsum(s01), r10 = hsum(s10), r11 = hsum(s11);
      for (std::size_t p = k4; p < k; ++p) {
        r00 += a0[p] * b0[p];
        r01 += a0[p] * b1[p];
        r10 += a1[p] * b0[p];
        r11 += a1[p] * b1[p];
      }
      double* c0 = c + i * n + j;
      double* c1 = c0 + n;
      if (accumulate) {
        c0[0] += r00; c0[1] += r01; c1[0] += r10; c1[1] += r11;
      } else {
        c0[0] = r00; c0[1] = r01; c1[0] = r10; c1[1] = r11;
      }
    }
    for (; j < n; ++j) {
      const double r0 = dot(a0, b + j * k, k);
      const double r1 = dot(a1, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + r0 : r0;
      c[(i + 1) * n + j] = accumulate ? c[(i + 1) * n + j] + r1 : r1;
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double r = dot(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + r : r;
    }
  }
}

void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) accumulate_rows(a + i * k, 1, b, c + i * n, n, k);
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) accumulate_rows(a + i, m, b, c + i * n, n, k);
}

}  // namespace takeoff::simd::avx2

#pragma GCC pop_options

#endif
