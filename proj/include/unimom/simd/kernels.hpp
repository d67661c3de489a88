#pragma once

// Dense double-precision kernels behind the autodiff tensor ops.
//
// Every kernel exists as a portable scalar reference. Vectorized variants
// (AVX2+FMA on x86-64, NEON on aarch64) are compiled in separate translation
// units and selected once at runtime from the CPU feature bits. Setting
// UNIMOM_SIMD=scalar in the environment forces the reference table.
//
// All matrices are row-major and densely packed. The gemm kernels accumulate
// into C (C += ...), callers zero C when they want an overwrite.

#include <cstddef>
#include <string_view>

namespace unimom::simd {

struct KernelTable {
  const char* name;

  /// C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  /// C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  /// C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  /// sum_i x[i] * y[i]
  double (*dot)(std::size_t n, const double* x, const double* y);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  /// out[i] += x[i] * y[i]
  void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
};

const KernelTable& scalar_kernels();

/// Vectorized table for this CPU, or nullptr when the build or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Table used by the library: best supported variant unless overridden by
/// UNIMOM_SIMD=scalar. Resolved on first call.
const KernelTable& active_kernels();

/// Override the active table (tests); pass nullptr to restore auto-detection.
void set_active_kernels(const KernelTable* table);

}  // namespace unimom::simd
