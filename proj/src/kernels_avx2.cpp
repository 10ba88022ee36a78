#include "texsyn/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define TEXSYN_X86 1
#include <immintrin.h>
#else
#define TEXSYN_X86 0
#endif

#include <algorithm>
#include <vector>

namespace texsyn::kernels {

#if TEXSYN_X86

namespace {

#define TEXSYN_AVX2 __attribute__((target("avx2,fma")))

constexpr std::size_t kMR = 6;
constexpr std::size_t kNR = 8;
constexpr std::size_t kKC = 256;
constexpr std::size_t kMC = 120;
constexpr std::size_t kNC = 1024;

// Packs rows [0, mc) x cols [0, kc) of A into kMR-row panels, zero padded.
void pack_a(std::size_t mc, std::size_t kc, const double* a, std::size_t lda,
            double* out) {
  for (std::size_t i0 = 0; i0 < mc; i0 += kMR) {
    const std::size_t rows = std::min(kMR, mc - i0);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < rows; ++r) *out++ = a[(i0 + r) * lda + p];
      for (std::size_t r = rows; r < kMR; ++r) *out++ = 0.0;
    }
  }
}

// Packs rows [0, kc) x cols [0, nc) of B into kNR-column panels, zero padded.
void pack_b(std::size_t kc, std::size_t nc, const double* b, std::size_t ldb,
            double* out) {
  for (std::size_t j0 = 0; j0 < nc; j0 += kNR) {
    const std::size_t cols = std::min(kNR, nc - j0);
    for (std::size_t p = 0; p < kc; ++p) {
      const double* brow = b + p * ldb + j0;
      for (std::size_t c = 0; c < cols; ++c) *out++ = brow[c];
      for (std::size_t c = cols; c < kNR; ++c) *out++ = 0.0;
    }
  }
}

TEXSYN_AVX2 void micro_6x8(std::size_t kc, const double* pa, const double* pb,
                           double* c, std::size_t ldc, std::size_t mr,
                           std::size_t nr) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  __m256d c40 = _mm256_setzero_pd(), c41 = _mm256_setzero_pd();
  __m256d c50 = _mm256_setzero_pd(), c51 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(pb);
    const __m256d b1 = _mm256_loadu_pd(pb + 4);
    __m256d a = _mm256_broadcast_sd(pa + 0);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(pa + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(pa + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(pa + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    a = _mm256_broadcast_sd(pa + 4);
    c40 = _mm256_fmadd_pd(a, b0, c40);
    c41 = _mm256_fmadd_pd(a, b1, c41);
    a = _mm256_broadcast_sd(pa + 5);
    c50 = _mm256_fmadd_pd(a, b0, c50);
    c51 = _mm256_fmadd_pd(a, b1, c51);
    pa += kMR;
    pb += kNR;
  }
  alignas(32) double tile[kMR][kNR];
  _mm256_store_pd(tile[0], c00);
  _mm256_store_pd(tile[0] + 4, c01);
  _mm256_store_pd(tile[1], c10);
  _mm256_store_pd(tile[1] + 4, c11);
  _mm256_store_pd(tile[2], c20);
  _mm256_store_pd(tile[2] + 4, c21);
  _mm256_store_pd(tile[3], c30);
  _mm256_store_pd(tile[3] + 4, c31);
  _mm256_store_pd(tile[4], c40);
  _mm256_store_pd(tile[4] + 4, c41);
  _mm256_store_pd(tile[5], c50);
  _mm256_store_pd(tile[5] + 4, c51);
  if (nr == kNR) {
    for (std::size_t r = 0; r < mr; ++r) {
      double* crow = c + r * ldc;
      _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow),
                                           _mm256_load_pd(tile[r])));
      _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4),
                                               _mm256_load_pd(tile[r] + 4)));
    }
  } else {
    for (std::size_t r = 0; r < mr; ++r)
      for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] += tile[r][j];
  }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  }
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<double> packed_a;
  thread_local std::vector<double> packed_b;
  packed_a.resize(((kMC + kMR - 1) / kMR) * kMR * kKC);
  packed_b.resize(((kNC + kNR - 1) / kNR) * kNR * kKC);

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      pack_b(kc, nc, b + pc * ldb + jc, ldb, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(mc, kc, a + ic * lda + pc, lda, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += kNR) {
          const std::size_t nr = std::min(kNR, nc - jr);
          const double* pb = packed_b.data() + (jr / kNR) * kNR * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMR) {
            const std::size_t mr = std::min(kMR, mc - ir);
            const double* pa = packed_a.data() + (ir / kMR) * kMR * kc;
            micro_6x8(kc, pa, pb, c + (ic + ir) * ldc + jc + jr, ldc, mr, nr);
          }
        }
      }
    }
  }
}

TEXSYN_AVX2 double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

TEXSYN_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                         _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

TEXSYN_AVX2 void axpy_avx2(double alpha, const double* x, double* y,
                           std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

TEXSYN_AVX2 void sq_dist_avx2(std::size_t m, std::size_t n, std::size_t d,
                              const double* q, const double* k, double* out) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* qi = q + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = k + j * d;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      std::size_t t = 0;
      for (; t + 8 <= d; t += 8) {
        const __m256d d0 =
            _mm256_sub_pd(_mm256_loadu_pd(qi + t), _mm256_loadu_pd(kj + t));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(qi + t + 4),
                                         _mm256_loadu_pd(kj + t + 4));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
        s1 = _mm256_fmadd_pd(d1, d1, s1);
      }
      for (; t + 4 <= d; t += 4) {
        const __m256d d0 =
            _mm256_sub_pd(_mm256_loadu_pd(qi + t), _mm256_loadu_pd(kj + t));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
      }
      double s = hsum(_mm256_add_pd(s0, s1));
      for (; t < d; ++t) {
        const double diff = qi[t] - kj[t];
        s += diff * diff;
      }
      out[i * n + j] = s;
    }
  }
}

}  // namespace

const KernelTable* avx2() {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{"avx2", gemm_avx2, dot_avx2, axpy_avx2,
                                 sq_dist_avx2};
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2() { return nullptr; }

#endif

}  // namespace texsyn::kernels
