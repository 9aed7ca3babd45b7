#include "pmatch/gibbs_partial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "pmatch/error.hpp"
#include "pmatch/kernels.hpp"

namespace pmatch {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> sort_order(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  return idx;
}

// Each X (in sorted order) is either unmatched or takes an unused Y.
class PartialEnumerator {
 public:
  explicit PartialEnumerator(const PartialPosteriorProblem& p)
      : p_(p), order_(sort_order(p.X())), pi_(p.nx()), used_(p.ny(), 0) {}

  template <class Visit>
  void run(Visit&& visit) {
    recurse(0, 0.0, visit);
  }

 private:
  template <class Visit>
  void recurse(int depth, double acc, Visit& visit) {
    if (depth == p_.nx()) {
      visit(pi_, acc);
      return;
    }
    const int i = order_[depth];
    pi_[i] = -1;
    recurse(depth + 1, acc, visit);
    for (int j = 0; j < p_.ny(); ++j) {
      if (used_[j]) continue;
      const double w = p_.a(i, j);
      if (w == kNegInf) continue;
      used_[j] = 1;
      pi_[i] = j;
      recurse(depth + 1, acc + w, visit);
      used_[j] = 0;
    }
    pi_[i] = -1;
  }

  const PartialPosteriorProblem& p_;
  std::vector<int> order_;
  std::vector<int> pi_;
  std::vector<char> used_;
};

void axpy_blocks(const simd::KernelTable& k, double w, const double* x, double* y,
                 std::size_t len) {
  if (len < 8) {
    for (std::size_t t = 0; t < len; ++t) y[t] += w * x[t];
  } else {
    k.axpy(w, x, y, len);
  }
}

double dot_blocks(const simd::KernelTable& k, const double* x, const double* y,
                  std::size_t len) {
  if (len < 8) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += x[t] * y[t];
    return s;
  }
  return k.dot(x, y, len);
}

void scale_to_max(std::vector<double>::iterator b, std::vector<double>::iterator e) {
  double m = 0.0;
  for (auto it = b; it != e; ++it) m = std::max(m, *it);
  if (!(m > 0.0)) throw NumericError("subset DP lost all mass");
  for (auto it = b; it != e; ++it) *it /= m;
}

// Subset DP with rows as the enumerated side and columns as the subset side.
// w is row-major rows x cols (linear weights). Returns rows x (cols + 1) with
// the last column the unmatched probability.
std::vector<double> subset_dp(const std::vector<double>& w, int rows, int cols) {
  const auto& k = simd::active_kernels();
  const std::size_t S = std::size_t{1} << cols;
  std::vector<double> g((static_cast<std::size_t>(rows) + 1) * S);
  auto layer = [&](int r) { return g.begin() + static_cast<std::ptrdiff_t>(r) * S; };
  std::fill(layer(rows), layer(rows) + S, 1.0);
  for (int r = rows - 1; r >= 0; --r) {
    const double* g1 = &*layer(r + 1);
    double* gr = &*layer(r);
    std::copy(g1, g1 + S, gr);
    for (int j = 0; j < cols; ++j) {
      const double wj = w[static_cast<std::size_t>(r) * cols + j];
      if (wj == 0.0) continue;
      const std::size_t step = std::size_t{1} << j;
      for (std::size_t hi = 0; hi < S; hi += 2 * step) {
        axpy_blocks(k, wj, g1 + hi + step, gr + hi, step);
      }
    }
    scale_to_max(layer(r), layer(r) + S);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * (cols + 1), 0.0);
  std::vector<double> f(S, 0.0), fn(S);
  f[0] = 1.0;
  for (int r = 0; r < rows; ++r) {
    const double* g1 = &*layer(r + 1);
    double* row = &out[static_cast<std::size_t>(r) * (cols + 1)];
    row[cols] = dot_blocks(k, f.data(), g1, S);
    std::copy(f.begin(), f.end(), fn.begin());
    double total = row[cols];
    for (int j = 0; j < cols; ++j) {
      const double wj = w[static_cast<std::size_t>(r) * cols + j];
      if (wj == 0.0) continue;
      const std::size_t step = std::size_t{1} << j;
      double s = 0.0;
      for (std::size_t hi = 0; hi < S; hi += 2 * step) {
        s += dot_blocks(k, f.data() + hi, g1 + hi + step, step);
        axpy_blocks(k, wj, f.data() + hi, fn.data() + hi + step, step);
      }
      row[j] = wj * s;
      total += row[j];
    }
    if (!(total > 0.0)) throw NumericError("subset DP row has no mass");
    for (int j = 0; j <= cols; ++j) row[j] /= total;
    f.swap(fn);
    scale_to_max(f.begin(), f.end());
  }
  return out;
}

}  // namespace

PartialPosteriorProblem::PartialPosteriorProblem(const PartialInstance& inst)
    : x_(inst.X), y_(inst.Y), v_(inst.model.V), scale_(static_cast<double>(inst.model.n)) {
  const auto& m = inst.model;
  for (double x : x_) ux_.push_back(u_n(m.V, m.lambda, m.n, x, m.quadrature_tol));
  for (double y : y_) uy_.push_back(u_n(m.V, m.lambda, m.n, y, m.quadrature_tol));
  logw_.resize(x_.size() * y_.size());
  for (int i = 0; i < nx(); ++i) {
    for (int j = 0; j < ny(); ++j) {
      logw_[static_cast<std::size_t>(i) * ny() + j] = v_.log_density(scale_ * (x_[i] - y_[j]));
    }
  }
}

PartialPosteriorProblem::PartialPosteriorProblem(std::vector<double> X,
                                                 std::vector<double> Y,
                                                 const PotentialV& V, double scale,
                                                 std::vector<double> ux,
                                                 std::vector<double> uy)
    : x_(std::move(X)), y_(std::move(Y)), v_(V), scale_(scale), ux_(std::move(ux)),
      uy_(std::move(uy)) {
  if (ux_.size() != x_.size() || uy_.size() != y_.size()) {
    throw ContractViolation("unmatched potentials do not match the point counts");
  }
  for (double u : ux_) {
    if (!std::isfinite(u)) throw NumericError("U is not finite at an X point");
  }
  for (double u : uy_) {
    if (!std::isfinite(u)) throw NumericError("U is not finite at a Y point");
  }
  logw_.resize(x_.size() * y_.size());
  for (int i = 0; i < nx(); ++i) {
    for (int j = 0; j < ny(); ++j) {
      logw_[static_cast<std::size_t>(i) * ny() + j] = v_.log_density(scale_ * (x_[i] - y_[j]));
    }
  }
}

PartialPosteriorProblem PartialPosteriorProblem::restrict(const std::vector<int>& xs,
                                                          const std::vector<int>& ys) const {
  PartialPosteriorProblem p = *this;
  p.x_.clear();
  p.ux_.clear();
  p.y_.clear();
  p.uy_.clear();
  for (int i : xs) {
    p.x_.push_back(x_[i]);
    p.ux_.push_back(ux_[i]);
  }
  for (int j : ys) {
    p.y_.push_back(y_[j]);
    p.uy_.push_back(uy_[j]);
  }
  p.logw_.resize(xs.size() * ys.size());
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t b = 0; b < ys.size(); ++b) {
      p.logw_[a * ys.size() + b] = log_w(xs[a], ys[b]);
    }
  }
  return p;
}

double hamiltonian_partial(const PartialPosteriorProblem& prob, const PartialMatching& pi) {
  if (static_cast<int>(pi.size()) != prob.nx()) {
    throw ContractViolation("partial matching has the wrong length");
  }
  std::vector<char> taken(prob.ny(), 0);
  double h = 0.0;
  for (int i = 0; i < prob.nx(); ++i) {
    if (!pi[i]) {
      h -= prob.ux()[i];
      continue;
    }
    const std::int64_t j = *pi[i];
    if (j < 0 || j >= prob.ny()) throw ContractViolation("Y index out of range");
    if (taken[j]) throw ContractViolation("partial matching is not injective");
    taken[j] = 1;
    h += prob.V()(prob.scale() * (prob.X()[i] - prob.Y()[j]));
  }
  for (int j = 0; j < prob.ny(); ++j) {
    if (!taken[j]) h -= prob.uy()[j];
  }
  return h;
}

std::uint64_t count_partial_bijections(int a, int b) {
  if (a < 0 || b < 0) throw DomainError("counts must be nonnegative");
  using u128 = unsigned __int128;
  const u128 limit = std::numeric_limits<std::uint64_t>::max();
  u128 total = 0;
  u128 falling = 1;  // a (a-1) ... (a-k+1)
  u128 binom = 1;    // C(b, k)
  for (int k = 0; k <= std::min(a, b); ++k) {
    if (k > 0) {
      falling *= static_cast<u128>(a - k + 1);
      binom = binom * static_cast<u128>(b - k + 1) / static_cast<u128>(k);
    }
    if (falling > limit || binom > limit || (binom != 0 && falling > limit / binom)) {
      throw EngineCapError("partial bijection count overflows 64 bits");
    }
    total += falling * binom;
    if (total > limit) throw EngineCapError("partial bijection count overflows 64 bits");
  }
  return static_cast<std::uint64_t>(total);
}

MatchDistribution PartialMarginalTable::row(int i) const {
  MatchDistribution d;
  d.labels.emplace_back();
  d.probs.push_back(empty(i));
  for (int j = 0; j < ny; ++j) {
    d.labels.emplace_back(j);
    d.probs.push_back(at(i, j));
  }
  return d;
}

double PartialMarginalTable::max_row_sum_error() const {
  double worst = 0.0;
  for (int i = 0; i < nx; ++i) {
    double s = 0.0;
    for (int j = 0; j <= ny; ++j) s += at(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

PartialMarginalTable marginals_bruteforce_partial(const PartialPosteriorProblem& prob,
                                                  const PartialCaps& caps) {
  std::uint64_t count = 0;
  try {
    count = count_partial_bijections(prob.nx(), prob.ny());
  } catch (const EngineCapError&) {
    count = std::numeric_limits<std::uint64_t>::max();
  }
  if (count > caps.bruteforce_count) {
    std::ostringstream msg;
    msg << "enumerating " << count << " partial bijections exceeds the cap of "
        << caps.bruteforce_count;
    throw EngineCapError(msg.str());
  }
  PartialMarginalTable t(prob.nx(), prob.ny());
  double best = kNegInf;
  PartialEnumerator(prob).run(
      [&](const std::vector<int>&, double w) { best = std::max(best, w); });
  double z = 0.0;
  PartialEnumerator(prob).run([&](const std::vector<int>& pi, double w) {
    const double v = std::exp(w - best);
    z += v;
    for (int i = 0; i < prob.nx(); ++i) {
      if (pi[i] < 0) {
        t.empty(i) += v;
      } else {
        t.at(i, pi[i]) += v;
      }
    }
  });
  for (double& v : t.p) v /= z;
  return t;
}

PartialMarginalTable marginals_dp_partial(const PartialPosteriorProblem& prob,
                                          const PartialCaps& caps) {
  const int nx = prob.nx();
  const int ny = prob.ny();
  PartialMarginalTable t(nx, ny);
  if (nx == 0) return t;
  if (ny == 0) {
    for (int i = 0; i < nx; ++i) t.empty(i) = 1.0;
    return t;
  }
  // Enumerate the larger side and take subsets of the smaller one.
  const bool transpose = nx < ny;
  const int rows = transpose ? ny : nx;
  const int cols = transpose ? nx : ny;
  const std::uint64_t cells = (static_cast<std::uint64_t>(rows) + 1)
                              << std::min(cols, 62);
  if (cols > caps.dp_max_ny || cols >= 62 || cells > caps.dp_max_cells) {
    std::ostringstream msg;
    msg << "subset DP over " << cols << " points exceeds the cap of " << caps.dp_max_ny
        << " (or " << caps.dp_max_cells << " cells)";
    throw EngineCapError(msg.str());
  }
  const std::vector<int> xo = sort_order(prob.X());
  const std::vector<int> yo = sort_order(prob.Y());
  const std::vector<int>& ro = transpose ? yo : xo;
  const std::vector<int>& co = transpose ? xo : yo;
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double a = transpose ? prob.a(co[c], ro[r]) : prob.a(ro[r], co[c]);
      w[static_cast<std::size_t>(r) * cols + c] = std::exp(a);
    }
  }
  const std::vector<double> m = subset_dp(w, rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = m[static_cast<std::size_t>(r) * (cols + 1) + c];
      if (transpose) {
        t.at(co[c], ro[r]) = v;
      } else {
        t.at(ro[r], co[c]) = v;
      }
    }
    if (!transpose) t.empty(ro[r]) = m[static_cast<std::size_t>(r) * (cols + 1) + cols];
  }
  if (transpose) {
    for (int i = 0; i < nx; ++i) {
      double s = 0.0;
      for (int j = 0; j < ny; ++j) s += t.at(i, j);
      t.empty(i) = std::max(0.0, 1.0 - s);
    }
  }
  return t;
}

std::string engine_name(PartialEngine e) {
  switch (e) {
    case PartialEngine::kBruteforce:
      return "enum";
    case PartialEngine::kDp:
      return "dp";
    case PartialEngine::kSweep:
      return "sweep";
    case PartialEngine::kAuto:
      break;
  }
  return "auto";
}

bool partial_dp_fits(int nx, int ny, const PartialCaps& caps) {
  const int cols = std::min(nx, ny);
  const int rows = std::max(nx, ny);
  if (cols > caps.dp_max_ny || cols >= 62) return false;
  return ((static_cast<std::uint64_t>(rows) + 1) << cols) <= caps.dp_max_cells;
}

bool partial_enum_fits(int nx, int ny, const PartialCaps& caps) {
  try {
    return count_partial_bijections(nx, ny) <= caps.bruteforce_count;
  } catch (const EngineCapError&) {
    return false;
  }
}

PartialEngine pick_partial_engine(int nx, int ny, const PartialCaps& caps,
                                  bool allow_sweep) {
  const bool dp = partial_dp_fits(nx, ny, caps);
  if (dp && !allow_sweep) return PartialEngine::kDp;
  if (dp) {
    const std::uint64_t cells = (static_cast<std::uint64_t>(std::max(nx, ny)) + 1)
                                << std::min(nx, ny);
    if (cells <= caps.auto_dp_cells) return PartialEngine::kDp;
  }
  if (partial_enum_fits(nx, ny, caps)) return PartialEngine::kBruteforce;
  if (allow_sweep) return PartialEngine::kSweep;
  std::ostringstream msg;
  msg << "window with " << nx << " X and " << ny << " Y points exceeds every engine cap";
  throw EngineCapError(msg.str());
}

PartialMarginalTable marginals_partial(const PartialPosteriorProblem& prob,
                                       PartialEngine engine, const PartialCaps& caps,
                                       const SweepOptions& sweep, PartialEngine* used) {
  const PartialEngine pick = engine == PartialEngine::kAuto
                                ? pick_partial_engine(prob.nx(), prob.ny(), caps, true)
                                : engine;
  if (used) *used = pick;
  switch (pick) {
    case PartialEngine::kBruteforce:
      return marginals_bruteforce_partial(prob, caps);
    case PartialEngine::kDp:
      return marginals_dp_partial(prob, caps);
    default:
      return marginals_sweep_partial(prob, sweep);
  }
}

WindowResult conditional_marginals_window_partial(const PartialPosteriorProblem& prob,
                                                  double lo, double hi, int i,
                                                  const PartialCaps& caps,
                                                  PartialEngine engine, bool allow_sweep,
                                                  const SweepOptions& sweep) {
  if (i < 0 || i >= prob.nx()) throw DomainError("X index out of range");
  if (!(prob.X()[i] >= lo && prob.X()[i] <= hi)) {
    throw DomainError("X_i lies outside the window");
  }
  std::vector<int> xs, ys;
  int center = -1;
  for (int k = 0; k < prob.nx(); ++k) {
    if (prob.X()[k] >= lo && prob.X()[k] <= hi) {
      if (k == i) center = static_cast<int>(xs.size());
      xs.push_back(k);
    }
  }
  for (int k = 0; k < prob.ny(); ++k) {
    if (prob.Y()[k] >= lo && prob.Y()[k] <= hi) ys.push_back(k);
  }
  const PartialPosteriorProblem local = prob.restrict(xs, ys);
  const int lx = local.nx();
  const int ly = local.ny();
  const PartialEngine pick =
      engine == PartialEngine::kAuto ? pick_partial_engine(lx, ly, caps, allow_sweep) : engine;
  WindowResult r;
  const PartialMarginalTable t = marginals_partial(local, pick, caps, sweep, &r.engine);
  r.dist.labels.emplace_back();
  r.dist.probs.push_back(t.empty(center));
  for (int b = 0; b < ly; ++b) {
    r.dist.labels.emplace_back(ys[b]);
    r.dist.probs.push_back(t.at(center, b));
  }
  return r;
}

std::string partial_table_csv(const PartialMarginalTable& m) {
  std::string out = "i,j,prob\n";
  char buf[96];
  for (int i = 0; i < m.nx; ++i) {
    if (m.empty(i) > 1e-15) {
      std::snprintf(buf, sizeof(buf), "%d,-1,%.17g\n", i, m.empty(i));
      out += buf;
    }
    for (int j = 0; j < m.ny; ++j) {
      if (m.at(i, j) > 1e-15) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, j, m.at(i, j));
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace pmatch
