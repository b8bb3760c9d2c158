// Compiled with -mavx2 -mfma. Nothing here may run before
// isa_supported(Isa::kAvx2) has been checked.

#include <immintrin.h>

#include <algorithm>

#include "mcm/numerics/kernels.hpp"

namespace mcm::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// 4x8 register tile: C[i..i+4, j..j+8] += A(i.., :) * B[:, j..j+8].
inline void tile_4x8(int64_t k, const double* a, int64_t a_row, int64_t a_col,
                     const double* b, int64_t ldb, double* c, int64_t ldc) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (int64_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    const double* ap = a + p * a_col;
    __m256d av = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(ap + a_row);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(ap + 2 * a_row);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(ap + 3 * a_row);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  auto store = [](double* dst, __m256d lo, __m256d hi) {
    _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), lo));
    _mm256_storeu_pd(dst + 4, _mm256_add_pd(_mm256_loadu_pd(dst + 4), hi));
  };
  store(c, c00, c01);
  store(c + ldc, c10, c11);
  store(c + 2 * ldc, c20, c21);
  store(c + 3 * ldc, c30, c31);
}

// One row of A against 4-wide column strips.
inline void row_strip(int64_t n, int64_t k, const double* a, int64_t a_col,
                      const double* b, int64_t ldb, double* c) {
  int64_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int64_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p * a_col),
                            _mm256_loadu_pd(b + p * ldb + j), acc);
    }
    _mm256_storeu_pd(c + j, _mm256_add_pd(_mm256_loadu_pd(c + j), acc));
  }
  for (; j < n; ++j) {
    double acc = 0.0;
    for (int64_t p = 0; p < k; ++p) acc += a[p * a_col] * b[p * ldb + j];
    c[j] += acc;
  }
}

// Rx8 tile (R < 4) for rows left over after the 4-row blocks; two
// accumulators per row split even/odd p to keep the FMA pipes busy.
template <int R>
inline void tile_rx8(int64_t k, const double* a, int64_t a_row, int64_t a_col,
                     const double* b, int64_t ldb, double* c, int64_t ldc) {
  __m256d acc[R][4];
  for (auto& row : acc) {
    for (auto& v : row) v = _mm256_setzero_pd();
  }
  int64_t p = 0;
  for (; p + 2 <= k; p += 2) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    const __m256d b2 = _mm256_loadu_pd(b + (p + 1) * ldb);
    const __m256d b3 = _mm256_loadu_pd(b + (p + 1) * ldb + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av0 = _mm256_broadcast_sd(a + r * a_row + p * a_col);
      const __m256d av1 = _mm256_broadcast_sd(a + r * a_row + (p + 1) * a_col);
      acc[r][0] = _mm256_fmadd_pd(av0, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av0, b1, acc[r][1]);
      acc[r][2] = _mm256_fmadd_pd(av1, b2, acc[r][2]);
      acc[r][3] = _mm256_fmadd_pd(av1, b3, acc[r][3]);
    }
  }
  for (; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * a_row + p * a_col);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* dst = c + r * ldc;
    _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst),
                                        _mm256_add_pd(acc[r][0], acc[r][2])));
    _mm256_storeu_pd(dst + 4, _mm256_add_pd(_mm256_loadu_pd(dst + 4),
                                            _mm256_add_pd(acc[r][1], acc[r][3])));
  }
}

void gemm_strided_a(int64_t m, int64_t n, int64_t k, const double* a,
                    int64_t a_row, int64_t a_col, const double* b, int64_t ldb,
                    double* c, int64_t ldc) {
  // Column panels keep the touched slice of B resident in L2.
  const int64_t panel = 64;
  const int64_t n8 = n - n % 8;
  for (int64_t j0 = 0; j0 < n8; j0 += panel) {
    const int64_t j1 = std::min(n8, j0 + panel);
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const double* ai = a + i * a_row;
      for (int64_t j = j0; j < j1; j += 8) {
        tile_4x8(k, ai, a_row, a_col, b + j, ldb, c + i * ldc + j, ldc);
      }
    }
    const int64_t rest = m - i;
    for (int64_t j = j0; j < j1 && rest > 0; j += 8) {
      const double* ai = a + i * a_row;
      double* ci = c + i * ldc + j;
      if (rest == 1) tile_rx8<1>(k, ai, a_row, a_col, b + j, ldb, ci, ldc);
      if (rest == 2) tile_rx8<2>(k, ai, a_row, a_col, b + j, ldb, ci, ldc);
      if (rest == 3) tile_rx8<3>(k, ai, a_row, a_col, b + j, ldb, ci, ldc);
    }
  }
  if (n8 < n) {
    for (int64_t i = 0; i < m; ++i) {
      row_strip(n - n8, k, a + i * a_row, a_col, b + n8, ldb, c + i * ldc + n8);
    }
  }
}

double dot(int64_t n, const double* a, const double* b) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc) {
  // 4x3 blocks of dot products share their row loads.
  const int64_t k4 = k - k % 4;
  int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * lda;
    int64_t j = 0;
    for (; j + 3 <= n; j += 3) {
      const double* b0 = b + j * ldb;
      __m256d acc[4][3];
      for (auto& row : acc) {
        for (auto& v : row) v = _mm256_setzero_pd();
      }
      for (int64_t p = 0; p < k4; p += 4) {
        const __m256d bv0 = _mm256_loadu_pd(b0 + p);
        const __m256d bv1 = _mm256_loadu_pd(b0 + ldb + p);
        const __m256d bv2 = _mm256_loadu_pd(b0 + 2 * ldb + p);
        for (int r = 0; r < 4; ++r) {
          const __m256d av = _mm256_loadu_pd(a0 + r * lda + p);
          acc[r][0] = _mm256_fmadd_pd(av, bv0, acc[r][0]);
          acc[r][1] = _mm256_fmadd_pd(av, bv1, acc[r][1]);
          acc[r][2] = _mm256_fmadd_pd(av, bv2, acc[r][2]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        for (int q = 0; q < 3; ++q) {
          double v = hsum(acc[r][q]);
          for (int64_t p = k4; p < k; ++p) v += a0[r * lda + p] * b0[q * ldb + p];
          c[(i + r) * ldc + j + q] += v;
        }
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) c[(i + r) * ldc + j] += dot(k, a0 + r * lda, b + j * ldb);
    }
  }
  for (; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot(k, a + i * lda, b + j * ldb);
    }
  }
}

void mul_add(int64_t n, const double* a, const double* b, const double* c,
             double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(c + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i] + c[i];
}

void relu(int64_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // Masking instead of max keeps -0.0 and NaN handling identical to scalar.
    const __m256d keep = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_and_pd(v, keep));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
  const __m256d zero = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d keep =
        _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(_mm256_loadu_pd(gy + i), keep);
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{gemm_strided_a, gemm_nt, mul_add, relu,
                             relu_backward,  axpy,    dot};
  return t;
}

}  // namespace mcm::kernels::avx2
