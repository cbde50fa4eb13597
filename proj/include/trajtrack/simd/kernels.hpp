#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels behind the autodiff engine. All matrices are
// row-major and contiguous. Every kernel accumulates into its output.
//
// Within one kernel table the value of each output element does not depend on
// how the matrix is tiled, so results are reproducible for any shape. The
// scalar and AVX2 tables differ only by FMA rounding.

namespace trajtrack::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // c[m x n] += a[k x m]^T * b[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
};

const KernelTable& scalar_kernels();

/// nullptr when the build has no AVX2 variant.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2_fma();

/// Table used by the engine. Chosen on first use: AVX2 when compiled in and
/// supported by the CPU, unless TRAJTRACK_SIMD=scalar is set.
const KernelTable& active_kernels();

/// Overrides the active table. Returns false if `isa` is unavailable here.
bool select_kernels(Isa isa);

}  // namespace trajtrack::simd
