#include "pmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pmatch/error.hpp"
#include "pmatch/rng.hpp"

namespace pmatch {

BoundaryState boundary_exact(const std::vector<int>& pi_sorted, int l) {
  BoundaryState b;
  b.location = l + 0.5;
  const int n = static_cast<int>(pi_sorted.size());
  if (l <= 0 || l >= n) return b;
  for (int k = 0; k < n; ++k) {
    const int m = pi_sorted[k];
    if ((k < l && m >= l) || (k >= l && m < l)) b.pairs.emplace_back(k, m);
  }
  return b;
}

BoundaryState boundary_partial(const std::vector<double>& X, const std::vector<double>& Y,
                               const PartialMatching& pi, double x) {
  BoundaryState b;
  b.location = x;
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (!pi[k]) continue;
    const int j = static_cast<int>(*pi[k]);
    const double xk = X[k], yj = Y[j];
    if ((xk <= x && yj > x) || (xk > x && yj <= x)) b.pairs.emplace_back(static_cast<int>(k), j);
  }
  return b;
}

std::vector<int> to_sorted(const ExactPosteriorProblem& prob, const std::vector<int>& pi) {
  const int n = prob.size();
  std::vector<int> out(n);
  for (int k = 0; k < n; ++k) out[k] = prob.t_inv()[pi[prob.s()[k]]];
  return out;
}

std::vector<bool> regularity_events(const ExactPosteriorProblem& prob, int L,
                                    double lambda_min) {
  if (L < 1) throw DomainError("L must be >= 1");
  if (!(lambda_min > 0.0)) throw DomainError("lambda_min must be positive");
  const int n = prob.size();
  const double n_s = prob.scale();
  const double spread = 3.0 * L / (2.0 * lambda_min);
  std::vector<bool> A(n);
  for (int r = 0; r < n; ++r) {
    const double xr = prob.X()[prob.s()[r]];
    const double yr = prob.Y()[prob.t()[r]];
    bool ok = n_s * std::abs(xr - yr) <= L;
    for (int j = std::max(0, r - L + 1); ok && j <= std::min(n - 1, r + L); ++j) {
      ok = n_s * std::abs(prob.X()[prob.s()[j]] - xr) <= spread &&
           n_s * std::abs(prob.Y()[prob.t()[j]] - yr) <= spread;
    }
    A[r] = ok;
  }
  return A;
}

EventRates event_rates(const ExactPosteriorProblem& prob, double lambda_min, int K, int L,
                       const std::vector<std::vector<int>>& sorted_samples) {
  if (K < 1) throw DomainError("K must be >= 1");
  const int n = prob.size();
  const std::vector<bool> A = regularity_events(prob, L, lambda_min);
  EventRates out;
  out.K = K;
  out.L = L;
  out.samples = sorted_samples.size();
  out.sites.resize(n);
  for (int r = 0; r < n; ++r) {
    out.sites[r].site = r;
    out.sites[r].A = A[r];
    out.A_fraction += A[r] ? 1.0 / n : 0.0;
  }
  const int KL = K * L;
  std::vector<int> crossing(n + 1), long_range(n + 1);
  std::vector<char> Lr(n);
  double regular = 0.0, empty_regular = 0.0;
  for (const auto& pi : sorted_samples) {
    if (static_cast<int>(pi.size()) != n) throw ContractViolation("sample has the wrong size");
    // Site r is the cut after r + 1 points; pair (k, m) crosses sites
    // min(k, m) .. max(k, m) - 1.
    std::fill(crossing.begin(), crossing.end(), 0);
    std::fill(long_range.begin(), long_range.end(), 0);
    for (int k = 0; k < n; ++k) {
      const int lo = std::min(k, pi[k]), hi = std::max(k, pi[k]);
      if (lo == hi) continue;
      ++crossing[lo];
      --crossing[hi];
      if (hi - lo > L) {
        ++long_range[lo];
        --long_range[hi];
      }
    }
    int c = 0, lr = 0;
    for (int r = 0; r < n; ++r) {
      c += crossing[r];
      lr += long_range[r];
      const bool C = lr == 0;
      Lr[r] = C && A[r];
      out.sites[r].C += C;
      out.sites[r].L += Lr[r];
      if (Lr[r]) {
        regular += 1.0;
        empty_regular += c == 0;
      }
    }
    for (int r = KL; r < n - KL; ++r) {
      int left = 0, right = 0;
      for (int k = 1; k <= KL; ++k) left += Lr[r - k];
      for (int k = 0; k < KL; ++k) right += Lr[r + k];
      if (3 * left >= 2 * KL && 3 * right >= 2 * KL) out.sites[r].G += 1.0;
    }
  }
  const double S = static_cast<double>(std::max<std::size_t>(1, out.samples));
  for (SiteEvents& s : out.sites) {
    s.C /= S;
    s.L /= S;
    s.G /= S;
    out.mean_G_complement += (1.0 - s.G) / n;
  }
  if (regular > 0.0) out.iota = empty_regular / regular;
  return out;
}

std::string event_rates_csv(const EventRates& r) {
  std::string out = "site,A,C_frequency,L_frequency,G_frequency\n";
  char buf[160];
  for (const SiteEvents& s : r.sites) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", s.site, s.A ? 1 : 0, s.C, s.L,
                  s.G);
    out += buf;
  }
  return out;
}

namespace {

std::int64_t default_burn_in(int m) {
  return m > 1 ? static_cast<std::int64_t>(10.0 * m * std::log(static_cast<double>(m))) : 0;
}

bool metropolis_accept(double log_ratio, CounterRng& rng) {
  return log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio);
}

template <class Visit>
void run_exact(const ExactPosteriorProblem& prob, std::int64_t steps, std::uint64_t seed,
               const McmcOptions& opt, McmcStats* stats, Visit&& visit) {
  if (steps < 1) throw DomainError("steps must be >= 1");
  const int n = prob.size();
  const std::int64_t burn = opt.burn_in >= 0 ? opt.burn_in : default_burn_in(n);
  const std::int64_t thin = opt.thin > 0 ? opt.thin : std::max(1, n);
  std::vector<int> pi(n);
  for (int k = 0; k < n; ++k) pi[prob.s()[k]] = prob.t()[k];
  CounterRng rng(seed, 0);
  McmcStats st;
  for (std::int64_t step = 0; step < burn + steps; ++step) {
    if (n >= 2) {
      const int i = static_cast<int>(rng.below(n));
      int j = static_cast<int>(rng.below(n - 1));
      if (j >= i) ++j;
      const double dh = hamiltonian_swap_delta(prob, pi, i, j);
      if (metropolis_accept(-dh, rng)) {
        std::swap(pi[i], pi[j]);
        if (step >= burn) ++st.accepted;
      }
    }
    if (step >= burn) {
      ++st.steps;
      if ((step - burn + 1) % thin == 0) visit(pi);
    }
  }
  if (stats) *stats = st;
}

class PartialChain {
 public:
  PartialChain(const PartialPosteriorProblem& p)
      : p_(p), px_(p.nx(), -1), py_(p.ny(), -1) {}

  const std::vector<int>& px() const { return px_; }

  int matched() const { return m_; }

  bool step(CounterRng& rng) {
    const int nx = p_.nx(), ny = p_.ny();
    const std::int64_t total = partial_move_count(nx, ny, m_);
    if (total == 0) return false;
    std::int64_t r = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
    collect();
    const std::int64_t adds = static_cast<std::int64_t>(ux_.size()) * uy_.size();
    double dlog;
    int next_m;
    // change to apply: (x, old y, new y) for up to two x points
    int xa = -1, ya = -1, xb = -1, yb = -1;
    if (r < adds) {
      xa = ux_[r / uy_.size()];
      ya = uy_[r % uy_.size()];
      dlog = p_.a(xa, ya);
      next_m = m_ + 1;
    } else if ((r -= adds) < m_) {
      xa = mx_[r];
      ya = -1;
      dlog = -p_.a(xa, px_[xa]);
      next_m = m_ - 1;
    } else {
      r -= m_;
      int a = 0;
      while (r >= m_ - 1 - a) {
        r -= m_ - 1 - a;
        ++a;
      }
      xa = mx_[a];
      xb = mx_[a + 1 + r];
      ya = px_[xb];
      yb = px_[xa];
      dlog = p_.a(xa, ya) + p_.a(xb, yb) - p_.a(xa, yb) - p_.a(xb, ya);
      next_m = m_;
    }
    const double log_ratio = dlog + std::log(static_cast<double>(total)) -
                             std::log(static_cast<double>(partial_move_count(nx, ny, next_m)));
    if (!metropolis_accept(log_ratio, rng)) return false;
    assign(xa, ya);
    if (xb >= 0) assign(xb, yb);
    m_ = next_m;
#ifndef NDEBUG
    check();
#endif
    return true;
  }

 private:
  void assign(int x, int y) {
    if (px_[x] >= 0 && py_[px_[x]] == x) py_[px_[x]] = -1;
    px_[x] = y;
    if (y >= 0) py_[y] = x;
  }
  void collect() {
    ux_.clear();
    uy_.clear();
    mx_.clear();
    for (int i = 0; i < p_.nx(); ++i) (px_[i] < 0 ? ux_ : mx_).push_back(i);
    for (int j = 0; j < p_.ny(); ++j) {
      if (py_[j] < 0) uy_.push_back(j);
    }
  }
  void check() const {
    int m = 0;
    for (int i = 0; i < p_.nx(); ++i) {
      if (px_[i] < 0) continue;
      ++m;
      if (py_[px_[i]] != i) throw ContractViolation("partial chain lost injectivity");
    }
    if (m != m_) throw ContractViolation("partial chain lost its match count");
  }

  const PartialPosteriorProblem& p_;
  std::vector<int> px_, py_;
  std::vector<int> ux_, uy_, mx_;
  int m_ = 0;
};

template <class Visit>
void run_partial(const PartialPosteriorProblem& prob, std::int64_t steps, std::uint64_t seed,
                 const McmcOptions& opt, McmcStats* stats, Visit&& visit) {
  if (steps < 1) throw DomainError("steps must be >= 1");
  const int m = prob.nx() + prob.ny();
  const std::int64_t burn = opt.burn_in >= 0 ? opt.burn_in : default_burn_in(m);
  const std::int64_t thin = opt.thin > 0 ? opt.thin : std::max(1, m);
  PartialChain chain(prob);
  CounterRng rng(seed, 0);
  McmcStats st;
  for (std::int64_t step = 0; step < burn + steps; ++step) {
    const bool acc = chain.step(rng);
    if (step >= burn) {
      ++st.steps;
      st.accepted += acc;
      if ((step - burn + 1) % thin == 0) visit(chain.px());
    }
  }
  if (stats) *stats = st;
}

}  // namespace

std::vector<std::vector<int>> mcmc_sample_exact(const ExactPosteriorProblem& prob,
                                                std::int64_t steps, std::uint64_t seed,
                                                const McmcOptions& opt, McmcStats* stats) {
  std::vector<std::vector<int>> out;
  run_exact(prob, steps, seed, opt, stats, [&](const std::vector<int>& pi) { out.push_back(pi); });
  return out;
}

MarginalMatrix mcmc_marginals_exact(const ExactPosteriorProblem& prob, std::int64_t steps,
                                    std::uint64_t seed, const McmcOptions& opt,
                                    McmcStats* stats) {
  const int n = prob.size();
  MarginalMatrix m(n);
  std::int64_t visits = 0;
  run_exact(prob, steps, seed, opt, stats, [&](const std::vector<int>& pi) {
    for (int i = 0; i < n; ++i) m(i, pi[i]) += 1.0;
    ++visits;
  });
  if (visits == 0) throw SamplingError("no states recorded; steps < thinning interval");
  for (double& v : m.p) v /= static_cast<double>(visits);
  return m;
}

std::int64_t partial_move_count(int nx, int ny, int m) {
  const std::int64_t a = nx - m, b = ny - m;
  return a * b + m + static_cast<std::int64_t>(m) * (m - 1) / 2;
}

std::vector<PartialMatching> mcmc_sample_partial(const PartialPosteriorProblem& prob,
                                                 std::int64_t steps, std::uint64_t seed,
                                                 const McmcOptions& opt, McmcStats* stats) {
  std::vector<PartialMatching> out;
  run_partial(prob, steps, seed, opt, stats, [&](const std::vector<int>& px) {
    PartialMatching pi(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (px[i] >= 0) pi[i] = px[i];
    }
    out.push_back(std::move(pi));
  });
  return out;
}

PartialMarginalTable mcmc_marginals_partial(const PartialPosteriorProblem& prob,
                                            std::int64_t steps, std::uint64_t seed,
                                            const McmcOptions& opt, McmcStats* stats) {
  PartialMarginalTable t(prob.nx(), prob.ny());
  std::int64_t visits = 0;
  run_partial(prob, steps, seed, opt, stats, [&](const std::vector<int>& px) {
    for (int i = 0; i < prob.nx(); ++i) {
      if (px[i] < 0) {
        t.empty(i) += 1.0;
      } else {
        t.at(i, px[i]) += 1.0;
      }
    }
    ++visits;
  });
  if (visits == 0) throw SamplingError("no states recorded; steps < thinning interval");
  for (double& v : t.p) v /= static_cast<double>(visits);
  return t;
}

}  // namespace pmatch
