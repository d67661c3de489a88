// AVX2 + FMA kernels. This file is compiled with -mavx2 -mfma and must only be
// entered after the runtime CPU check in dispatch.cpp.

#include "unimom/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>

namespace unimom::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// One row of C, columns [j0, n), full k.
inline void gemm_nn_row(std::size_t n, std::size_t k, std::size_t j0, const double* ai,
                        const double* b, double* ci) {
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_set1_pd(ai[p]), _mm256_loadu_pd(b + p * n + j), acc);
    }
    _mm256_storeu_pd(ci + j, _mm256_add_pd(_mm256_loadu_pd(ci + j), acc));
  }
  for (; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * b[p * n + j];
    ci[j] += acc;
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * k;
    const double* a1 = a + (i + 1) * k;
    const double* a2 = a + (i + 2) * k;
    const double* a3 = a + (i + 3) * k;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
        __m256d av = _mm256_set1_pd(a0[p]);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_set1_pd(a1[p]);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_set1_pd(a2[p]);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_set1_pd(a3[p]);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      double* r0 = c + (i + 0) * n + j;
      double* r1 = c + (i + 1) * n + j;
      double* r2 = c + (i + 2) * n + j;
      double* r3 = c + (i + 3) * n + j;
      _mm256_storeu_pd(r0, _mm256_add_pd(_mm256_loadu_pd(r0), c00));
      _mm256_storeu_pd(r0 + 4, _mm256_add_pd(_mm256_loadu_pd(r0 + 4), c01));
      _mm256_storeu_pd(r1, _mm256_add_pd(_mm256_loadu_pd(r1), c10));
      _mm256_storeu_pd(r1 + 4, _mm256_add_pd(_mm256_loadu_pd(r1 + 4), c11));
      _mm256_storeu_pd(r2, _mm256_add_pd(_mm256_loadu_pd(r2), c20));
      _mm256_storeu_pd(r2 + 4, _mm256_add_pd(_mm256_loadu_pd(r2 + 4), c21));
      _mm256_storeu_pd(r3, _mm256_add_pd(_mm256_loadu_pd(r3), c30));
      _mm256_storeu_pd(r3 + 4, _mm256_add_pd(_mm256_loadu_pd(r3 + 4), c31));
    }
    if (j < n) {
      for (std::size_t r = 0; r < 4; ++r) gemm_nn_row(n, k, j, a + (i + r) * k, b, c + (i + r) * n);
    }
  }
  for (; i < m; ++i) gemm_nn_row(n, k, 0, a + i * k, b, c + i * n);
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * k;
      const double* b1 = b + (j + 1) * k;
      const double* b2 = b + (j + 2) * k;
      const double* b3 = b + (j + 3) * k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(ai + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += ai[p] * b0[p];
        t1 += ai[p] * b1[p];
        t2 += ai[p] * b2[p];
        t3 += ai[p] * b3[p];
      }
      ci[j + 0] += t0;
      ci[j + 1] += t1;
      ci[j + 2] += t2;
      ci[j + 3] += t3;
    }
    for (; j < n; ++j) ci[j] += dot(k, ai, b + j * k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  constexpr std::size_t kBlock = 128;
  for (std::size_t r0 = 0; r0 < k; r0 += kBlock) {
    const std::size_t r1 = std::min(k, r0 + kBlock);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
        __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
        __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
        __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
        for (std::size_t r = r0; r < r1; ++r) {
          const double* ar = a + r * m + i;
          const __m256d b0 = _mm256_loadu_pd(b + r * n + j);
          const __m256d b1 = _mm256_loadu_pd(b + r * n + j + 4);
          __m256d av = _mm256_set1_pd(ar[0]);
          c00 = _mm256_fmadd_pd(av, b0, c00);
          c01 = _mm256_fmadd_pd(av, b1, c01);
          av = _mm256_set1_pd(ar[1]);
          c10 = _mm256_fmadd_pd(av, b0, c10);
          c11 = _mm256_fmadd_pd(av, b1, c11);
          av = _mm256_set1_pd(ar[2]);
          c20 = _mm256_fmadd_pd(av, b0, c20);
          c21 = _mm256_fmadd_pd(av, b1, c21);
          av = _mm256_set1_pd(ar[3]);
          c30 = _mm256_fmadd_pd(av, b0, c30);
          c31 = _mm256_fmadd_pd(av, b1, c31);
        }
        double* q0 = c + (i + 0) * n + j;
        double* q1 = c + (i + 1) * n + j;
        double* q2 = c + (i + 2) * n + j;
        double* q3 = c + (i + 3) * n + j;
        _mm256_storeu_pd(q0, _mm256_add_pd(_mm256_loadu_pd(q0), c00));
        _mm256_storeu_pd(q0 + 4, _mm256_add_pd(_mm256_loadu_pd(q0 + 4), c01));
        _mm256_storeu_pd(q1, _mm256_add_pd(_mm256_loadu_pd(q1), c10));
        _mm256_storeu_pd(q1 + 4, _mm256_add_pd(_mm256_loadu_pd(q1 + 4), c11));
        _mm256_storeu_pd(q2, _mm256_add_pd(_mm256_loadu_pd(q2), c20));
        _mm256_storeu_pd(q2 + 4, _mm256_add_pd(_mm256_loadu_pd(q2 + 4), c21));
        _mm256_storeu_pd(q3, _mm256_add_pd(_mm256_loadu_pd(q3), c30));
        _mm256_storeu_pd(q3 + 4, _mm256_add_pd(_mm256_loadu_pd(q3 + 4), c31));
      }
      for (; j < n; ++j) {
        for (std::size_t ii = i; ii < i + 4; ++ii) {
          double acc = 0.0;
          for (std::size_t r = r0; r < r1; ++r) acc += a[r * m + ii] * b[r * n + j];
          c[ii * n + j] += acc;
        }
      }
    }
    for (; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t r = r0; r < r1; ++r) {
        const __m256d av = _mm256_set1_pd(a[r * m + i]);
        const double* br = b + r * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
          _mm256_storeu_pd(ci + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(br + j),
                                                   _mm256_loadu_pd(ci + j)));
        }
        for (; j < n; ++j) ci[j] += a[r * m + i] * br[j];
      }
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                              _mm256_loadu_pd(out + i)));
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

constexpr KernelTable kAvx2{"avx2", gemm_nn, gemm_nt, gemm_tn, dot, axpy, mul_acc};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kAvx2; }

}  // namespace unimom::simd

#else

namespace unimom::simd {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace unimom::simd

#endif
