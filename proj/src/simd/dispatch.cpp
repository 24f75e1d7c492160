#include <cstdlib>
#include <string_view>

#include "drcrt/simd.hpp"

namespace drcrt::simd {

#ifndef DRCRT_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select() {
  const char* env = std::getenv("DRCRT_SIMD");
  const std::string_view want = env ? env : "";
  if (want == "scalar") return scalar_kernels();
  if (avx2_kernels() && cpu_has_avx2()) return *avx2_kernels();
  return scalar_kernels();
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& chosen = select();
  return chosen;
}

}  // namespace drcrt::simd
