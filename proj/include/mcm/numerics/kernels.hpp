#pragma once

// Inner-loop kernels behind the tensor ops. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2+FMA variant picked at
// runtime. Results of the two paths agree to rounding, not bitwise: the
// vector path reassociates sums and fuses multiply-adds.

#include <cstdint>
#include <string_view>

namespace mcm::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  // C[M,N] += A(m,k) * B[K,N], where A(m,k) = a[m * a_row + k * a_col].
  // Covers both A*B (a_row=lda, a_col=1) and A^T*B (a_row=1, a_col=lda).
  void (*gemm_strided_a)(int64_t m, int64_t n, int64_t k, const double* a,
                         int64_t a_row, int64_t a_col, const double* b,
                         int64_t ldb, double* c, int64_t ldc);
  // C[M,N] += A[M,K] * B[N,K]^T
  void (*gemm_nt)(int64_t m, int64_t n, int64_t k, const double* a,
                  int64_t lda, const double* b, int64_t ldb, double* c,
                  int64_t ldc);
  // out[i] = a[i] * b[i] + c[i]
  void (*mul_add)(int64_t n, const double* a, const double* b, const double* c,
                  double* out);
  // y[i] = x[i] > 0 ? x[i] : 0
  void (*relu)(int64_t n, const double* x, double* y);
  // gx[i] += x[i] > 0 ? gy[i] : 0
  void (*relu_backward)(int64_t n, const double* x, const double* gy,
                        double* gx);
  // y[i] += alpha * x[i]
  void (*axpy)(int64_t n, double alpha, const double* x, double* y);
  double (*dot)(int64_t n, const double* a, const double* b);
};

bool isa_supported(Isa isa);
const KernelTable& table(Isa isa);

// Kernels used by the tensor ops. Defaults to the widest supported ISA;
// the MCM_ISA environment variable ("scalar" or "avx2") overrides it.
const KernelTable& active();
Isa active_isa();
void set_active_isa(Isa isa);

// Scoped override, mostly for tests.
class IsaScope {
 public:
  explicit IsaScope(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~IsaScope() { set_active_isa(previous_); }
  IsaScope(const IsaScope&) = delete;
  IsaScope& operator=(const IsaScope&) = delete;

 private:
  Isa previous_;
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// Only valid to call when isa_supported(Isa::kAvx2).
const KernelTable& table();
}

}  // namespace mcm::kernels
