// Scalar reference vs AVX2 equivalence for every kernel in the table.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "mcm/numerics/kernels.hpp"
#include "mcm/numerics/random.hpp"

using namespace mcm;
using kernels::Isa;

namespace {

std::vector<double> random_vec(int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(a[i]));
    CHECK(std::abs(a[i] - b[i]) <= 1e-12 * scale);
  }
}

}  // namespace

TEST_CASE("active ISA is supported") {
  CHECK(kernels::isa_supported(kernels::active_isa()));
  MESSAGE("active kernels: " << kernels::isa_name(kernels::active_isa()));
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  if (!kernels::isa_supported(Isa::kAvx2)) {
    MESSAGE("AVX2 not available; skipping equivalence");
    return;
  }
  const auto& ref = kernels::table(Isa::kScalar);
  const auto& vec = kernels::table(Isa::kAvx2);
  Rng rng(7);

  SUBCASE("gemm_strided_a, plain and transposed A") {
    for (int trial = 0; trial < 40; ++trial) {
      const int64_t m = 1 + rng.below(13), n = 1 + rng.below(37), k = 1 + rng.below(29);
      const bool transposed = trial % 2 == 1;
      auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      const int64_t a_row = transposed ? 1 : k, a_col = transposed ? m : 1;
      ref.gemm_strided_a(m, n, k, a.data(), a_row, a_col, b.data(), n, c0.data(), n);
      vec.gemm_strided_a(m, n, k, a.data(), a_row, a_col, b.data(), n, c1.data(), n);
      check_close(c0, c1);
    }
  }
  SUBCASE("gemm_nt") {
    for (int trial = 0; trial < 40; ++trial) {
      const int64_t m = 1 + rng.below(9), n = 1 + rng.below(17), k = 1 + rng.below(70);
      auto a = random_vec(m * k, rng), b = random_vec(n * k, rng);
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      ref.gemm_nt(m, n, k, a.data(), k, b.data(), k, c0.data(), n);
      vec.gemm_nt(m, n, k, a.data(), k, b.data(), k, c1.data(), n);
      check_close(c0, c1);
    }
  }
  SUBCASE("elementwise kernels") {
    for (int64_t n : {1, 3, 4, 7, 8, 33, 100}) {
      auto a = random_vec(n, rng), b = random_vec(n, rng), c = random_vec(n, rng);
      std::vector<double> o0(n), o1(n);
      ref.mul_add(n, a.data(), b.data(), c.data(), o0.data());
      vec.mul_add(n, a.data(), b.data(), c.data(), o1.data());
      check_close(o0, o1);

      ref.relu(n, a.data(), o0.data());
      vec.relu(n, a.data(), o1.data());
      CHECK(o0 == o1);

      auto g0 = c, g1 = c;
      ref.relu_backward(n, a.data(), b.data(), g0.data());
      vec.relu_backward(n, a.data(), b.data(), g1.data());
      CHECK(g0 == g1);

      auto y0 = c, y1 = c;
      ref.axpy(n, 0.37, a.data(), y0.data());
      vec.axpy(n, 0.37, a.data(), y1.data());
      check_close(y0, y1);

      CHECK(std::abs(ref.dot(n, a.data(), b.data()) - vec.dot(n, a.data(), b.data())) <=
            1e-12 * n);
    }
  }
}

TEST_CASE("identity modulation is exact on both paths") {
  // beta = 1, gamma = 0 must reproduce features bit for bit, including
  // through the fused multiply-add.
  Rng rng(3);
  auto f = random_vec(37, rng);
  for (auto& x : f) x = x > 0 ? x : 0.0;
  std::vector<double> ones(37, 1.0), zeros(37, 0.0), out(37);
  for (Isa isa : {Isa::kScalar, Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    kernels::table(isa).mul_add(37, ones.data(), f.data(), zeros.data(), out.data());
    CHECK(out == f);
  }
}

TEST_CASE("relu maps negative zero and negatives to +0") {
  for (Isa isa : {Isa::kScalar, Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    std::vector<double> x{-0.0, -1.0, 2.0, 0.0, -3.0}, y(5);
    kernels::table(isa).relu(5, x.data(), y.data());
    for (int i : {0, 1, 3, 4}) CHECK(!std::signbit(y[i]));
    CHECK(y[2] == 2.0);
  }
}
