#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops used by the tensor engine. Every kernel has a
// portable scalar reference; SIMD variants are selected once at startup and
// must agree with the reference up to floating-point reassociation.
namespace texsyn::kernels {

struct KernelTable {
  std::string_view name;

  // C[m x n] (+)= A[m x k] * B[k x n], all row-major with the given leading
  // dimensions. When accumulate is false C is overwritten.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate);

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // out[i * n + j] = ||q_i - k_j||^2 for q[m x d], k[n x d].
  void (*sq_dist)(std::size_t m, std::size_t n, std::size_t d, const double* q,
                  const double* k, double* out);
};

const KernelTable& scalar();

// nullptr when the binary or the host CPU lacks AVX2+FMA.
const KernelTable* avx2();

// Kernel set used by tensor ops. Chosen on first use: AVX2 when available,
// unless the environment variable TEXSYN_SIMD is set to "off" or "scalar".
const KernelTable& active();

// Overrides the active table (tests and benchmarks).
void set_active(const KernelTable& table);

}  // namespace texsyn::kernels
