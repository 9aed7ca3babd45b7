// Permanents and permanent-minor marginals by Ryser's inclusion-exclusion.
//
//   perm(B)        = (-1)^n     sum_S (-1)^|S| prod_i r_i(S)
//   perm(B \ i, j) = (-1)^(n-1) sum_{S not containing j} (-1)^|S| prod_{k!=i} r_k(S)
//
// with r_i(S) = sum_{j in S} B_ij. Subsets are visited in Gray-code order so
// each step adds or removes one column.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "pmatch/error.hpp"
#include "pmatch/gibbs_exact.hpp"
#include "pmatch/kernels.hpp"

namespace pmatch {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kRefresh = 1024;  // recompute row sums from scratch

double log_sum_exp(const double* v, std::size_t n, std::size_t stride,
                   const double* shift) {
  double m = kNegInf;
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, v[k * stride] - shift[k]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k * stride] - shift[k] - m);
  return m + std::log(s);
}

struct Balanced {
  int n = 0;
  std::vector<double> cols;  // column-major B: cols[j * n + i] = B_ij
  double log_scale = 0.0;    // log perm(exp(a)) = log perm(B) + log_scale
};

// Log-space Sinkhorn scaling toward a doubly stochastic matrix. Marginals of
// the bijection law are invariant under row and column scaling.
Balanced balance(const LogMatrix& a) {
  const int n = a.n;
  std::vector<double> r(n, 0.0), c(n, 0.0);
  const std::vector<double> zeros(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (log_sum_exp(&a.a[static_cast<std::size_t>(i) * n], n, 1, zeros.data()) == kNegInf ||
        log_sum_exp(&a.a[i], n, n, zeros.data()) == kNegInf) {
      throw NumericError("weight matrix has an all-zero row or column");
    }
  }
  for (int it = 0; it < 200; ++it) {
    for (int i = 0; i < n; ++i) {
      r[i] = log_sum_exp(&a.a[static_cast<std::size_t>(i) * n], n, 1, c.data());
    }
    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
      const double cj = log_sum_exp(&a.a[j], n, n, r.data());
      worst = std::max(worst, std::abs(cj - c[j]));
      c[j] = cj;
    }
    if (worst < 1e-6) break;
  }
  Balanced b;
  b.n = n;
  b.cols.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      b.cols[static_cast<std::size_t>(j) * n + i] = std::exp(a(i, j) - r[i] - c[j]);
    }
    b.log_scale += r[i];
  }
  for (int j = 0; j < n; ++j) b.log_scale += c[j];
  return b;
}

void check_cap(int n, int cap) {
  if (n > cap) {
    std::ostringstream msg;
    msg << "permanent of a " << n << " x " << n << " matrix exceeds the cap of "
        << cap;
    throw EngineCapError(msg.str());
  }
  if (n > 62) throw EngineCapError("permanent engine supports at most 62 rows");
}

void refresh_row_sums(const Balanced& b, std::uint64_t subset, double* r) {
  std::fill(r, r + b.n, 0.0);
  for (int j = 0; j < b.n; ++j) {
    if (subset >> j & 1u) {
      for (int i = 0; i < b.n; ++i) r[i] += b.cols[static_cast<std::size_t>(j) * b.n + i];
    }
  }
}

double ryser(const Balanced& b) {
  const int n = b.n;
  const auto& k = simd::active_kernels();
  std::vector<double> r(n, 0.0);
  std::uint64_t subset = 0;
  double total = 0.0;
  const std::uint64_t steps = std::uint64_t{1} << n;
  for (std::uint64_t step = 1; step < steps; ++step) {
    const int bit = std::countr_zero(step);
    subset ^= std::uint64_t{1} << bit;
    const bool added = subset >> bit & 1u;
    if (step % kRefresh == 0) {
      refresh_row_sums(b, subset, r.data());
    } else {
      k.axpy(added ? 1.0 : -1.0, &b.cols[static_cast<std::size_t>(bit) * n], r.data(), n);
    }
    const double sgn = (std::popcount(subset) & 1) ? -1.0 : 1.0;
    total += sgn * k.product(r.data(), n);
  }
  return (n & 1) ? -total : total;
}

void finish_rows(const Balanced& b, MarginalMatrix& m) {
  for (int i = 0; i < m.n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.n; ++j) {
      double v = m(i, j) * b.cols[static_cast<std::size_t>(j) * b.n + i];
      v = std::max(v, 0.0);
      m(i, j) = v;
      s += v;
    }
    if (!(s > 0.0)) throw NumericError("permanent minors vanish; no bijection has weight");
    for (int j = 0; j < m.n; ++j) m(i, j) /= s;
  }
}

}  // namespace

double permanent(const std::vector<double>& w, int n) {
  if (static_cast<int>(w.size()) != n * n) {
    throw ContractViolation("matrix size mismatch");
  }
  check_cap(n, 62);
  if (n == 0) return 1.0;
  Balanced b;
  b.n = n;
  b.cols.resize(w.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) b.cols[static_cast<std::size_t>(j) * n + i] = w[i * n + j];
  }
  return ryser(b);
}

double log_permanent(const LogMatrix& a, int cap) {
  check_cap(a.n, cap);
  if (a.n == 0) return 0.0;
  const Balanced b = balance(a);
  const double p = ryser(b);
  if (!(p > 0.0)) return kNegInf;
  return std::log(p) + b.log_scale;
}

MarginalMatrix permanent_marginals(const LogMatrix& a, int cap) {
  check_cap(a.n, cap);
  const int n = a.n;
  MarginalMatrix m(n);
  if (n == 0) return m;
  if (n == 1) {
    if (a(0, 0) == kNegInf) throw NumericError("no bijection has positive weight");
    m(0, 0) = 1.0;
    return m;
  }
  const Balanced b = balance(a);
  const auto& k = simd::active_kernels();
  std::vector<double> r(n, 0.0), e(n), pre(n + 1), suf(n + 1);
  // g[j * n + i] accumulates sum over S not containing j of sgn * prod_{k!=i} r_k.
  std::vector<double> g(static_cast<std::size_t>(n) * n, 0.0);
  std::uint64_t subset = 0;
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  const std::uint64_t steps = std::uint64_t{1} << n;
  for (std::uint64_t step = 1; step < steps; ++step) {
    const int bit = std::countr_zero(step);
    subset ^= std::uint64_t{1} << bit;
    const bool added = subset >> bit & 1u;
    if (step % kRefresh == 0) {
      refresh_row_sums(b, subset, r.data());
    } else {
      k.axpy(added ? 1.0 : -1.0, &b.cols[static_cast<std::size_t>(bit) * n], r.data(), n);
    }
    const double sgn = (std::popcount(subset) & 1) ? -1.0 : 1.0;
    pre[0] = 1.0;
    for (int i = 0; i < n; ++i) pre[i + 1] = pre[i] * r[i];
    suf[n] = 1.0;
    for (int i = n - 1; i >= 0; --i) suf[i] = suf[i + 1] * r[i];
    for (int i = 0; i < n; ++i) e[i] = pre[i] * suf[i + 1];
    for (std::uint64_t rest = full & ~subset; rest; rest &= rest - 1) {
      const int j = std::countr_zero(rest);
      k.axpy(sgn, e.data(), &g[static_cast<std::size_t>(j) * n], n);
    }
  }
  const double sign = ((n - 1) & 1) ? -1.0 : 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = sign * g[static_cast<std::size_t>(j) * n + i];
  }
  finish_rows(b, m);
  return m;
}

std::vector<double> permanent_row_marginals(const LogMatrix& a, int row, int cap) {
  check_cap(a.n, cap);
  const int n = a.n;
  if (row < 0 || row >= n) throw DomainError("row out of range");
  if (n > 32) throw EngineCapError("single-row permanent engine supports at most 32 rows");
  if (n == 1) return {1.0};
  const Balanced b = balance(a);
  const auto& k = simd::active_kernels();
  std::vector<double> r(n, 0.0), g(n, 0.0);
  std::uint64_t subset = 0;
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  const std::uint64_t steps = std::uint64_t{1} << n;
  for (std::uint64_t step = 1; step < steps; ++step) {
    const int bit = std::countr_zero(step);
    subset ^= std::uint64_t{1} << bit;
    const bool added = subset >> bit & 1u;
    if (step % kRefresh == 0) {
      refresh_row_sums(b, subset, r.data());
    } else {
      k.axpy(added ? 1.0 : -1.0, &b.cols[static_cast<std::size_t>(bit) * n], r.data(), n);
    }
    const double sgn = (std::popcount(subset) & 1) ? -1.0 : 1.0;
    const double others = k.product(r.data(), row) *
                          k.product(r.data() + row + 1, n - row - 1);
    k.masked_add(g.data(), static_cast<std::uint32_t>(full & ~subset), sgn * others, n);
  }
  const double sign = ((n - 1) & 1) ? -1.0 : 1.0;
  std::vector<double> out(n);
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = std::max(0.0, sign * g[j] * b.cols[static_cast<std::size_t>(j) * n + row]);
    s += out[j];
  }
  if (!(s > 0.0)) throw NumericError("permanent minors vanish; no bijection has weight");
  for (double& v : out) v /= s;
  return out;
}

}  // namespace pmatch
