// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <limits>

#include "pmatch/kernels.hpp"

namespace pmatch::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hprod(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d p = _mm_mul_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_mul_sd(p, _mm_unpackhi_pd(p, p)));
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256d y0 = _mm256_loadu_pd(y + k);
    __m256d y1 = _mm256_loadu_pd(y + k + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k + 4), y1);
    _mm256_storeu_pd(y + k, y0);
    _mm256_storeu_pd(y + k + 4, y1);
  }
  for (; k + 4 <= n; k += 4) {
    const __m256d y0 =
        _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k));
    _mm256_storeu_pd(y + k, y0);
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k + 4),
                         _mm256_loadu_pd(y + k + 4), s1);
  }
  for (; k + 4 <= n; k += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; k < n; ++k) s += x[k] * y[k];
  return s;
}

double product(const double* x, std::size_t n) {
  __m256d p = _mm256_set1_pd(1.0);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) p = _mm256_mul_pd(p, _mm256_loadu_pd(x + k));
  double r = hprod(p);
  for (; k < n; ++k) r *= x[k];
  return r;
}

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  if (n >= 4) {
    __m256d vm = _mm256_set1_pd(m);
    for (; k + 4 <= n; k += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + k));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vm);
    m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  }
  for (; k < n; ++k) m = std::max(m, x[k]);
  return m;
}

void masked_add(double* acc, std::uint32_t mask, double value, std::size_t n) {
  const __m256i vmask = _mm256_set1_epi64x(static_cast<long long>(mask));
  const __m256d vval = _mm256_set1_pd(value);
  __m256i bits = _mm256_setr_epi64x(1, 2, 4, 8);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256i hit =
        _mm256_cmpeq_epi64(_mm256_and_si256(vmask, bits), bits);
    const __m256d add = _mm256_and_pd(_mm256_castsi256_pd(hit), vval);
    _mm256_storeu_pd(acc + k, _mm256_add_pd(_mm256_loadu_pd(acc + k), add));
    bits = _mm256_slli_epi64(bits, 4);
  }
  for (; k < n; ++k) {
    if (mask & (std::uint32_t{1} << k)) acc[k] += value;
  }
}

void gaussian_log_weights(double x, const double* ys, std::size_t n,
                          double scale, double inv_two_var, double log_norm,
                          double* out) {
  const __m256d vx = _mm256_set1_pd(x);
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vi = _mm256_set1_pd(inv_two_var);
  const __m256d vl = _mm256_set1_pd(-log_norm);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d e = _mm256_mul_pd(_mm256_sub_pd(vx, _mm256_loadu_pd(ys + k)), vs);
    const __m256d e2 = _mm256_mul_pd(e, e);
    _mm256_storeu_pd(out + k, _mm256_fnmadd_pd(e2, vi, vl));
  }
  for (; k < n; ++k) {
    const double e = (x - ys[k]) * scale;
    out[k] = -e * e * inv_two_var - log_norm;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::kAvx2, "avx2", axpy,       dot,
                                 product,    max,    masked_add,
                                 gaussian_log_weights};
  return table;
}

}  // namespace pmatch::simd
