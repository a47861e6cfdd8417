#pragma once

#include <string_view>

// Inner-loop kernels behind the differentiation engine and the filter bank.
// Every kernel has a portable scalar reference; vector variants must agree
// with it to rounding (see tests/test_kernels.cpp). All matrices are
// row-major with explicit leading dimensions.
namespace ctn::simd {

struct KernelTable {
  std::string_view name;

  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc);
  // C[m x n] += A^T * B, with A stored k x m
  void (*gemm_tn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc);
  // C[m x n] += A * B^T, with B stored n x k
  void (*gemm_nt)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double* c, int ldc);

  // Horizontal 1-D correlation with clamp-to-edge: dst[r][c] = sum_t taps[t] * src[r][clamp(c + t - radius)]
  void (*conv_rows)(const double* src, double* dst, int rows, int cols, const double* taps,
                    int radius);
  // Vertical counterpart: dst[r][c] = sum_t taps[t] * src[clamp(r + t - radius)][c]
  void (*conv_cols)(const double* src, double* dst, int rows, int cols, const double* taps,
                    int radius);

  // y[i] += alpha * x[i]
  void (*axpy)(int n, double alpha, const double* x, double* y);
  double (*dot)(int n, const double* x, const double* y);
};

const KernelTable& scalar_kernels() noexcept;

// nullptr when the vector variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

// The table chosen at first use: AVX2+FMA when available, else scalar.
// Setting CTN_SIMD=scalar in the environment forces the reference path.
const KernelTable& kernels() noexcept;

}  // namespace ctn::simd
