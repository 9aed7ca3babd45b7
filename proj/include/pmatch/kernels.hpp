#pragma once

// Data-parallel inner loops shared by the marginal engines.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2 on
// x86-64, NEON on AArch64) are compiled into separate translation units and
// selected once at runtime. Setting PMATCH_SIMD=scalar in the environment
// forces the reference path.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pmatch::simd {

enum class Isa { kScalar, kAvx2, kNeon };

struct KernelTable {
  Isa isa;
  const char* name;

  // y[k] += a * x[k]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*product)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  // acc[k] += value for every set bit k of mask (n <= 32).
  void (*masked_add)(double* acc, std::uint32_t mask, double value,
                     std::size_t n);
  // out[k] = -((x - ys[k]) * scale)^2 * inv_two_var - log_norm
  void (*gaussian_log_weights)(double x, const double* ys, std::size_t n,
                               double scale, double inv_two_var,
                               double log_norm, double* out);
};

const KernelTable& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The table used by the engines. Chosen on first call.
const KernelTable& active_kernels();

// All tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_kernels();

}  // namespace pmatch::simd
