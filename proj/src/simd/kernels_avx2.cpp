// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "trajtrack/simd/kernels.hpp"

namespace trajtrack::simd {
namespace {

// Every output element is a single FMA chain in ascending reduction order, so
// the 4x8 tiles, the 1x4 tiles and the scalar tails all agree bit for bit.

inline void nn_tile_4x8(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + n), c11 = _mm256_loadu_pd(c + n + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * n), c21 = _mm256_loadu_pd(c + 2 * n + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * n), c31 = _mm256_loadu_pd(c + 3 * n + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + k + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * k + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * k + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + n, c10);
  _mm256_storeu_pd(c + n + 4, c11);
  _mm256_storeu_pd(c + 2 * n, c20);
  _mm256_storeu_pd(c + 2 * n + 4, c21);
  _mm256_storeu_pd(c + 3 * n, c30);
  _mm256_storeu_pd(c + 3 * n + 4, c31);
}

inline void nn_tile_1x4(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  __m256d acc = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * n), acc);
  }
  _mm256_storeu_pd(c, acc);
}

inline void nn_tile_1x1(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  double acc = *c;
  for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p], b[p * n], acc);
  *c = acc;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) nn_tile_4x8(n, k, a + i * k, b + j, c + i * n + j);
    for (std::size_t r = 0; r < 4; ++r) {
      std::size_t jj = j;
      for (; jj + 4 <= n; jj += 4) nn_tile_1x4(n, k, a + (i + r) * k, b + jj, c + (i + r) * n + jj);
      for (; jj < n; ++jj) nn_tile_1x1(n, k, a + (i + r) * k, b + jj, c + (i + r) * n + jj);
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) nn_tile_1x4(n, k, a + i * k, b + j, c + i * n + j);
    for (; j < n; ++j) nn_tile_1x1(n, k, a + i * k, b + j, c + i * n + j);
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);  // (l0 + l2, l1 + l3)
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

inline double dot_impl(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

// One output element of gemm_nt: four lane sums, reduced, then the scalar tail.
inline double nt_finish(__m256d acc, std::size_t p, std::size_t k, const double* a,
                        const double* b) {
  double r = hsum(acc);
  for (; p < k; ++p) r = std::fma(a[p], b[p], r);
  return r;
}

inline void nt_tile_2x4(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const double* a0 = a;
  const double* a1 = a + k;
  const double* b0 = b;
  const double* b1 = b0 + k;
  const double* b2 = b1 + k;
  const double* b3 = b2 + k;
  __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd();
  __m256d s02 = _mm256_setzero_pd(), s03 = _mm256_setzero_pd();
  __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd();
  __m256d s12 = _mm256_setzero_pd(), s13 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d x0 = _mm256_loadu_pd(a0 + p);
    const __m256d x1 = _mm256_loadu_pd(a1 + p);
    __m256d y = _mm256_loadu_pd(b0 + p);
    s00 = _mm256_fmadd_pd(x0, y, s00);
    s10 = _mm256_fmadd_pd(x1, y, s10);
    y = _mm256_loadu_pd(b1 + p);
    s01 = _mm256_fmadd_pd(x0, y, s01);
    s11 = _mm256_fmadd_pd(x1, y, s11);
    y = _mm256_loadu_pd(b2 + p);
    s02 = _mm256_fmadd_pd(x0, y, s02);
    s12 = _mm256_fmadd_pd(x1, y, s12);
    y = _mm256_loadu_pd(b3 + p);
    s03 = _mm256_fmadd_pd(x0, y, s03);
    s13 = _mm256_fmadd_pd(x1, y, s13);
  }
  c[0] += nt_finish(s00, p, k, a0, b0);
  c[1] += nt_finish(s01, p, k, a0, b1);
  c[2] += nt_finish(s02, p, k, a0, b2);
  c[3] += nt_finish(s03, p, k, a0, b3);
  c[n] += nt_finish(s10, p, k, a1, b0);
  c[n + 1] += nt_finish(s11, p, k, a1, b1);
  c[n + 2] += nt_finish(s12, p, k, a1, b2);
  c[n + 3] += nt_finish(s13, p, k, a1, b3);
}

inline void nt_tile_1x4(std::size_t k, const double* a, const double* b, double* c) {
  const double* b0 = b;
  const double* b1 = b0 + k;
  const double* b2 = b1 + k;
  const double* b3 = b2 + k;
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d x = _mm256_loadu_pd(a + p);
    s0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b0 + p), s0);
    s1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b1 + p), s1);
    s2 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b2 + p), s2);
    s3 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b3 + p), s3);
  }
  c[0] += nt_finish(s0, p, k, a, b0);
  c[1] += nt_finish(s1, p, k, a, b1);
  c[2] += nt_finish(s2, p, k, a, b2);
  c[3] += nt_finish(s3, p, k, a, b3);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) nt_tile_2x4(n, k, a + i * k, b + j * k, c + i * n + j);
    for (; j < n; ++j) {
      c[i * n + j] += dot_impl(k, a + i * k, b + j * k);
      c[(i + 1) * n + j] += dot_impl(k, a + (i + 1) * k, b + j * k);
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) nt_tile_1x4(k, a + i * k, b + j * k, c + i * n + j);
    for (; j < n; ++j) c[i * n + j] += dot_impl(k, a + i * k, b + j * k);
  }
}

inline void axpy_impl(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// c[i][j] += sum_p a[p][i] * b[p][j]; a is k x m, b is k x n.
inline void tn_tile_4x8(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + n), c11 = _mm256_loadu_pd(c + n + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * n), c21 = _mm256_loadu_pd(c + 2 * n + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * n), c31 = _mm256_loadu_pd(c + 3 * n + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    const double* ap = a + p * m;
    __m256d av = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + n, c10);
  _mm256_storeu_pd(c + n + 4, c11);
  _mm256_storeu_pd(c + 2 * n, c20);
  _mm256_storeu_pd(c + 2 * n + 4, c21);
  _mm256_storeu_pd(c + 3 * n, c30);
  _mm256_storeu_pd(c + 3 * n + 4, c31);
}

inline void tn_tile_1x4(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c) {
  __m256d acc = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < k; ++p) {
    acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p * m), _mm256_loadu_pd(b + p * n), acc);
  }
  _mm256_storeu_pd(c, acc);
}

inline void tn_tile_1x1(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c) {
  double acc = *c;
  for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[p * m], b[p * n], acc);
  *c = acc;
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) tn_tile_4x8(m, n, k, a + i, b + j, c + i * n + j);
    for (std::size_t r = 0; r < 4; ++r) {
      std::size_t jj = j;
      for (; jj + 4 <= n; jj += 4) tn_tile_1x4(m, n, k, a + i + r, b + jj, c + (i + r) * n + jj);
      for (; jj < n; ++jj) tn_tile_1x1(m, n, k, a + i + r, b + jj, c + (i + r) * n + jj);
    }
  }
  for (; i < m; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) tn_tile_1x4(m, n, k, a + i, b + j, c + i * n + j);
    for (; j < n; ++j) tn_tile_1x1(m, n, k, a + i, b + j, c + i * n + j);
  }
}

double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_impl(n, alpha, x, y); }

constexpr KernelTable kAvx2Table{Isa::kAvx2, "avx2", gemm_nn, gemm_nt, gemm_tn, dot, axpy};

}  // namespace

const KernelTable* avx2_table_impl() { return &kAvx2Table; }

}  // namespace trajtrack::simd
