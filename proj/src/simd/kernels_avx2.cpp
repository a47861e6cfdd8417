// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here runs unless dispatch confirmed CPU support.
#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "ctn/simd/kernels.hpp"

namespace ctn::simd {
namespace {

template <bool TransA>
inline double a_at(const double* a, int lda, int i, int p) {
  return TransA ? a[static_cast<long>(p) * lda + i] : a[static_cast<long>(i) * lda + p];
}

// R rows x 8 columns register block.
template <int R, bool TransA>
inline void block_r8(int k, const double* a, int lda, const double* b, int ldb, double* c,
                     int ldc) {
  __m256d acc[R][2];
  for (int r = 0; r < R; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<long>(p) * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_set1_pd(a_at<TransA>(a, lda, r, p));
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + static_cast<long>(r) * ldc;
    _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[r][0]));
    _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc[r][1]));
  }
}

template <int R, bool TransA>
inline void block_r4(int k, const double* a, int lda, const double* b, int ldb, double* c,
                     int ldc) {
  __m256d acc[R];
  for (int r = 0; r < R; ++r) acc[r] = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + static_cast<long>(p) * ldb);
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, r, p)), b0, acc[r]);
  }
  for (int r = 0; r < R; ++r) {
    double* crow = c + static_cast<long>(r) * ldc;
    _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[r]));
  }
}

template <int R, bool TransA>
inline void block_r1(int k, const double* a, int lda, const double* b, int ldb, double* c,
                     int ldc) {
  double acc[R] = {};
  for (int p = 0; p < k; ++p) {
    const double bv = b[static_cast<long>(p) * ldb];
    for (int r = 0; r < R; ++r) acc[r] += a_at<TransA>(a, lda, r, p) * bv;
  }
  for (int r = 0; r < R; ++r) c[static_cast<long>(r) * ldc] += acc[r];
}

template <int R, bool TransA>
void row_panel(int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
               int ldc) {
  int j = 0;
  for (; j + 8 <= n; j += 8) block_r8<R, TransA>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j + 4 <= n; j += 4) block_r4<R, TransA>(k, a, lda, b + j, ldb, c + j, ldc);
  for (; j < n; ++j) block_r1<R, TransA>(k, a, lda, b + j, ldb, c + j, ldc);
}

template <bool TransA>
void gemm_impl(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
               double* c, int ldc) {
  auto a_rows = [&](int i) { return TransA ? a + i : a + static_cast<long>(i) * lda; };
  int i = 0;
  for (; i + 4 <= m; i += 4)
    row_panel<4, TransA>(n, k, a_rows(i), lda, b, ldb, c + static_cast<long>(i) * ldc, ldc);
  switch (m - i) {
    case 3:
      row_panel<3, TransA>(n, k, a_rows(i), lda, b, ldb, c + static_cast<long>(i) * ldc, ldc);
      break;
    case 2:
      row_panel<2, TransA>(n, k, a_rows(i), lda, b, ldb, c + static_cast<long>(i) * ldc, ldc);
      break;
    case 1:
      row_panel<1, TransA>(n, k, a_rows(i), lda, b, ldb, c + static_cast<long>(i) * ldc, ldc);
      break;
    default:
      break;
  }
}

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  gemm_impl<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  gemm_impl<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
  // Materialize B^T (k x n) so the broadcast-FMA panel applies.
  thread_local std::vector<double> bt;
  bt.resize(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<long>(j) * ldb + p];
  gemm_impl<false>(m, n, k, a, lda, bt.data(), n, c, ldc);
}

void conv_rows(const double* src, double* dst, int rows, int cols, const double* taps,
               int radius) {
  for (int r = 0; r < rows; ++r) {
    const double* s = src + static_cast<long>(r) * cols;
    double* d = dst + static_cast<long>(r) * cols;
    auto clamped = [&](int c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += taps[t + radius] * s[std::clamp(c + t, 0, cols - 1)];
      return acc;
    };
    const int lo = std::min(radius, cols);
    const int hi = std::max(lo, cols - radius);
    int c = 0;
    for (; c < lo; ++c) d[c] = clamped(c);
    for (; c + 4 <= hi; c += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (int t = -radius; t <= radius; ++t)
        acc = _mm256_fmadd_pd(_mm256_set1_pd(taps[t + radius]), _mm256_loadu_pd(s + c + t), acc);
      _mm256_storeu_pd(d + c, acc);
    }
    for (; c < cols; ++c) d[c] = clamped(c);
  }
}

void conv_cols(const double* src, double* dst, int rows, int cols, const double* taps,
               int radius) {
  for (int r = 0; r < rows; ++r) {
    double* d = dst + static_cast<long>(r) * cols;
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (int t = -radius; t <= radius; ++t) {
        const int rr = std::clamp(r + t, 0, rows - 1);
        acc = _mm256_fmadd_pd(_mm256_set1_pd(taps[t + radius]),
                              _mm256_loadu_pd(src + static_cast<long>(rr) * cols + c), acc);
      }
      _mm256_storeu_pd(d + c, acc);
    }
    for (; c < cols; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += taps[t + radius] * src[static_cast<long>(std::clamp(r + t, 0, rows - 1)) * cols + c];
      d[c] = acc;
    }
  }
}

void axpy(int n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(int n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{"avx2", gemm_nn, gemm_tn, gemm_nt, conv_rows, conv_cols,
                                 axpy,   dot};
  return table;
}

}  // namespace ctn::simd
