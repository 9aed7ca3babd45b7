#include <algorithm>
#include <limits>

#include "pmatch/kernels.hpp"

namespace pmatch::simd {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += x[k] * y[k];
  return s;
}

double product(const double* x, std::size_t n) {
  double p = 1.0;
  for (std::size_t k = 0; k < n; ++k) p *= x[k];
  return p;
}

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, x[k]);
  return m;
}

void masked_add(double* acc, std::uint32_t mask, double value, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (mask & (std::uint32_t{1} << k)) acc[k] += value;
  }
}

void gaussian_log_weights(double x, const double* ys, std::size_t n,
                          double scale, double inv_two_var, double log_norm,
                          double* out) {
  for (std::size_t k = 0; k < n; ++k) {
    const double e = (x - ys[k]) * scale;
    out[k] = -e * e * inv_two_var - log_norm;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::kScalar, "scalar", axpy,       dot,
                                 product,      max,      masked_add,
                                 gaussian_log_weights};
  return table;
}

}  // namespace pmatch::simd
