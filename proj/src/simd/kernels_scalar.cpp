#include <algorithm>

#include "ctn/simd/kernels.hpp"

namespace ctn::simd {
namespace {

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<long>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<long>(i) * lda + p];
      const double* brow = b + static_cast<long>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<long>(p) * lda;
    const double* brow = b + static_cast<long>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + static_cast<long>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<long>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<long>(j) * ldb;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<long>(i) * ldc + j] += s;
    }
  }
}

void conv_rows(const double* src, double* dst, int rows, int cols, const double* taps,
               int radius) {
  for (int r = 0; r < rows; ++r) {
    const double* s = src + static_cast<long>(r) * cols;
    double* d = dst + static_cast<long>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        const int cc = std::clamp(c + t, 0, cols - 1);
        acc += taps[t + radius] * s[cc];
      }
      d[c] = acc;
    }
  }
}

void conv_cols(const double* src, double* dst, int rows, int cols, const double* taps,
               int radius) {
  for (int r = 0; r < rows; ++r) {
    double* d = dst + static_cast<long>(r) * cols;
    for (int c = 0; c < cols; ++c) d[c] = 0.0;
    for (int t = -radius; t <= radius; ++t) {
      const int rr = std::clamp(r + t, 0, rows - 1);
      const double w = taps[t + radius];
      const double* s = src + static_cast<long>(rr) * cols;
      for (int c = 0; c < cols; ++c) d[c] += w * s[c];
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(int n, const double* x, const double* y) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{"scalar", gemm_nn, gemm_tn, gemm_nt, conv_rows, conv_cols,
                                 axpy,     dot};
  return table;
}

}  // namespace ctn::simd
