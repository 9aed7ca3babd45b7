#include <cstdlib>
#include <cstring>

#include "pmatch/kernels.hpp"

namespace pmatch::simd {

#if defined(PMATCH_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(PMATCH_HAVE_NEON)
const KernelTable& neon_table();
#endif

const KernelTable* avx2_kernels() {
#if defined(PMATCH_HAVE_AVX2)
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_kernels() {
#if defined(PMATCH_HAVE_NEON)
  // Advanced SIMD is mandatory on AArch64.
  return &neon_table();
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("PMATCH_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) {
      return &scalar_kernels();
    }
    if (const KernelTable* t = avx2_kernels()) return t;
    if (const KernelTable* t = neon_kernels()) return t;
    return &scalar_kernels();
  }();
  return *chosen;
}

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* t = avx2_kernels()) out.push_back(t);
  if (const KernelTable* t = neon_kernels()) out.push_back(t);
  return out;
}

}  // namespace pmatch::simd
