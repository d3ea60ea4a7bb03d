#include <cmath>
#include <vector>

#include "doctest.h"
#include "takeoff/rng.hpp"
#include "takeoff/simd/kernels.hpp"

using namespace takeoff;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::block(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("random streams are reproducible and independent") {
  RandomStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    differs_c |= x != c();
    differs_d |= x != d();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("uniform and below stay in range with sane moments") {
  RandomStream r(1, 1);
  double sum = 0.0;
  const int n = 200000;
  std::vector<int> hist(7, 0);
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    const auto k = r.below(7);
    REQUIRE(k < 7);
    ++hist[k];
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
  for (int h : hist) CHECK(std::abs(h / double(n) - 1.0 / 7) < 0.005);
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  RandomStream r(seed, 0);
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * r.uniform() - 1.0;
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("simd kernels agree with the scalar reference") {
  if (!simd::isa_supported(simd::Isa::Avx2)) {
    MESSAGE("AVX2 not available; only the scalar path is exercised");
    return;
  }
  const auto& s = simd::table(simd::Isa::Scalar);
  const auto& v = simd::table(simd::Isa::Avx2);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u, 130u}) {
    const auto a = noise(n, 1), b = noise(n, 2);
    CHECK(std::abs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) < 1e-12);
    auto y1 = noise(n, 3), y2 = y1;
    s.axpy(0.37, a.data(), y1.data(), n);
    v.axpy(0.37, a.data(), y2.data(), n);
    CHECK(max_diff(y1, y2) < 1e-14);
  }
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 9, 33}, {32, 48, 49}, {5, 64, 3}, {2, 3, 130}};
  for (const auto& sh : shapes) {
    const std::size_t m = sh[0], n = sh[1], k = sh[2];
    for (bool acc : {false, true}) {
      const auto a = noise(m * k, 4), b = noise(n * k, 5);
      auto c1 = noise(m * n, 6), c2 = c1;
      s.gemm_nt(a.data(), b.data(), c1.data(), m, n, k, acc);
      v.gemm_nt(a.data(), b.data(), c2.data(), m, n, k, acc);
      CHECK(max_diff(c1, c2) < 1e-12);
    }
    {
      const auto a = noise(m * k, 7), b = noise(k * n, 8);
      auto c1 = noise(m * n, 9), c2 = c1;
      s.gemm_nn_acc(a.data(), b.data(), c1.data(), m, n, k);
      v.gemm_nn_acc(a.data(), b.data(), c2.data(), m, n, k);
      CHECK(max_diff(c1, c2) < 1e-12);
    }
    {
      const auto a = noise(k * m, 10), b = noise(k * n, 11);
      auto c1 = noise(m * n, 12), c2 = c1;
      s.gemm_tn_acc(a.data(), b.data(), c1.data(), m, n, k);
      v.gemm_tn_acc(a.data(), b.data(), c2.data(), m, n, k);
      CHECK(max_diff(c1, c2) < 1e-12);
    }
  }
}

TEST_CASE("scalar gemm matches a naive triple loop") {
  const std::size_t m = 4, n = 5, k = 6;
  const auto a = noise(m * k, 1), b = noise(n * k, 2);
  std::vector<double> c(m * n);
  simd::scalar::gemm_nt(a.data(), b.data(), c.data(), m, n, k, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[j * k + q];
      CHECK(std::abs(c[i * n + j] - s) < 1e-14);
    }
}

TEST_CASE("dispatch can be switched") {
  const auto before = simd::active().isa;
  simd::set_active(simd::Isa::Scalar);
  CHECK(simd::active().isa == simd::Isa::Scalar);
  simd::set_active(before);
  CHECK(simd::active().isa == before);
}
