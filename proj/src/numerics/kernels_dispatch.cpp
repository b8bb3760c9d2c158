#include <atomic>
#include <cstdlib>
#include <string>

#include "mcm/numerics/kernels.hpp"

namespace mcm::kernels {
namespace {

#if defined(MCM_HAVE_AVX2)
constexpr bool kBuiltWithAvx2 = true;
#else
constexpr bool kBuiltWithAvx2 = false;
#endif

Isa initial_isa() {
  if (const char* env = std::getenv("MCM_ISA")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) return true;
  if constexpr (kBuiltWithAvx2) {
#if defined(__GNUC__) || defined(__clang__)
    static const bool ok =
        __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
#else
    return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
#if defined(MCM_HAVE_AVX2)
  if (isa == Isa::kAvx2 && isa_supported(Isa::kAvx2)) return avx2::table();
#endif
  return scalar::table();
}

const KernelTable& active() { return table(current().load()); }
Isa active_isa() { return current().load(); }

void set_active_isa(Isa isa) {
  current().store(isa_supported(isa) ? isa : Isa::kScalar);
}

}  // namespace mcm::kernels
