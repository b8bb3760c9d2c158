#include "mcm/numerics/kernels.hpp"

namespace mcm::kernels::scalar {
namespace {

void gemm_strided_a(int64_t m, int64_t n, int64_t k, const double* a,
                    int64_t a_row, int64_t a_col, const double* b, int64_t ldb,
                    double* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[i * a_row + p * a_col];
      const double* brow = b + p * ldb;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] += acc;
    }
  }
}

void mul_add(int64_t n, const double* a, const double* b, const double* c,
             double* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i] + c[i];
}

void relu(int64_t n, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
  for (int64_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) gx[i] += gy[i];
  }
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(int64_t n, const double* a, const double* b) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{gemm_strided_a, gemm_nt, mul_add, relu,
                             relu_backward,  axpy,    dot};
  return t;
}

}  // namespace mcm::kernels::scalar
