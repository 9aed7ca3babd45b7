// AArch64 Advanced SIMD variants (two doubles per register).

#include <arm_neon.h>

#include <algorithm>
#include <limits>

#include "pmatch/kernels.hpp"

namespace pmatch::simd {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    float64x2_t y0 = vld1q_f64(y + k);
    float64x2_t y1 = vld1q_f64(y + k + 2);
    y0 = vfmaq_f64(y0, va, vld1q_f64(x + k));
    y1 = vfmaq_f64(y1, va, vld1q_f64(x + k + 2));
    vst1q_f64(y + k, y0);
    vst1q_f64(y + k + 2, y1);
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + k), vld1q_f64(y + k));
    s1 = vfmaq_f64(s1, vld1q_f64(x + k + 2), vld1q_f64(y + k + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; k < n; ++k) s += x[k] * y[k];
  return s;
}

double product(const double* x, std::size_t n) {
  float64x2_t p = vdupq_n_f64(1.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) p = vmulq_f64(p, vld1q_f64(x + k));
  double r = vgetq_lane_f64(p, 0) * vgetq_lane_f64(p, 1);
  for (; k < n; ++k) r *= x[k];
  return r;
}

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  if (n >= 2) {
    float64x2_t vm = vdupq_n_f64(m);
    for (; k + 2 <= n; k += 2) vm = vmaxq_f64(vm, vld1q_f64(x + k));
    m = vmaxvq_f64(vm);
  }
  for (; k < n; ++k) m = std::max(m, x[k]);
  return m;
}

void masked_add(double* acc, std::uint32_t mask, double value, std::size_t n) {
  const uint64x2_t vmask = vdupq_n_u64(mask);
  const float64x2_t vval = vdupq_n_f64(value);
  uint64x2_t bits = {1, 2};
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const uint64x2_t hit = vceqq_u64(vandq_u64(vmask, bits), bits);
    const float64x2_t add = vreinterpretq_f64_u64(
        vandq_u64(hit, vreinterpretq_u64_f64(vval)));
    vst1q_f64(acc + k, vaddq_f64(vld1q_f64(acc + k), add));
    bits = vshlq_n_u64(bits, 2);
  }
  for (; k < n; ++k) {
    if (mask & (std::uint32_t{1} << k)) acc[k] += value;
  }
}

void gaussian_log_weights(double x, const double* ys, std::size_t n,
                          double scale, double inv_two_var, double log_norm,
                          double* out) {
  const float64x2_t vx = vdupq_n_f64(x);
  const float64x2_t vs = vdupq_n_f64(scale);
  const float64x2_t vi = vdupq_n_f64(inv_two_var);
  const float64x2_t vl = vdupq_n_f64(-log_norm);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const float64x2_t e = vmulq_f64(vsubq_f64(vx, vld1q_f64(ys + k)), vs);
    vst1q_f64(out + k, vfmsq_f64(vl, vmulq_f64(e, e), vi));
  }
  for (; k < n; ++k) {
    const double e = (x - ys[k]) * scale;
    out[k] = -e * e * inv_two_var - log_norm;
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{Isa::kNeon, "neon", axpy,       dot,
                                 product,    max,    masked_add,
                                 gaussian_log_weights};
  return table;
}

}  // namespace pmatch::simd
