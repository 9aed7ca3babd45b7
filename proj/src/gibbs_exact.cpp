#include "pmatch/gibbs_exact.hpp"

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
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return v[a] < v[b]; });
  return idx;
}

std::vector<int> inverse(const std::vector<int>& p) {
  std::vector<int> inv(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) inv[p[k]] = static_cast<int>(k);
  return inv;
}

// Depth-first enumeration of all bijections.
class Enumerator {
 public:
  Enumerator(const LogMatrix& a, std::optional<std::uint64_t> order_seed)
      : a_(a), n_(a.n), order_(n_), pi_(n_), used_(n_, 0) {
    for (int d = 0; d < n_; ++d) {
      order_[d].resize(n_);
      std::iota(order_[d].begin(), order_[d].end(), 0);
      if (order_seed) {
        CounterRng rng(*order_seed, static_cast<std::uint64_t>(d));
        for (int m = n_; m > 1; --m) {
          std::swap(order_[d][m - 1], order_[d][rng.below(m)]);
        }
      }
    }
  }

  // Visit(pi, total log-weight) for every bijection.
  template <class Visit>
  void run(Visit&& visit) {
    recurse(0, 0.0, visit);
  }

 private:
  template <class Visit>
  void recurse(int depth, double acc, Visit& visit) {
    if (depth == n_) {
      visit(pi_, acc);
      return;
    }
    for (int j : order_[depth]) {
      if (used_[j]) continue;
      const double w = a_(depth, j);
      if (w == kNegInf) continue;
      used_[j] = 1;
      pi_[depth] = j;
      recurse(depth + 1, acc + w, visit);
      used_[j] = 0;
    }
  }

  const LogMatrix& a_;
  int n_;
  std::vector<std::vector<int>> order_;
  std::vector<int> pi_;
  std::vector<char> used_;
};

}  // namespace

MatchDistribution MarginalMatrix::row(int i) const {
  MatchDistribution d;
  for (int j = 0; j < n; ++j) {
    d.labels.emplace_back(j);
    d.probs.push_back((*this)(i, j));
  }
  return d;
}

double MarginalMatrix::max_row_sum_error() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += (*this)(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

double MarginalMatrix::max_col_sum_error() const {
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (*this)(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

LogMatrix pair_log_weights(const std::vector<double>& x,
                           const std::vector<double>& y, const PotentialV& V,
                           double scale) {
  if (x.size() != y.size()) throw ContractViolation("x and y differ in length");
  const int n = static_cast<int>(x.size());
  LogMatrix a(n);
  if (V.kind() == PotentialV::Kind::kGaussian) {
    const double sigma = V.sigma();
    const double log_norm = V(0.0);
    const auto& k = simd::active_kernels();
    for (int i = 0; i < n; ++i) {
      k.gaussian_log_weights(x[i], y.data(), y.size(), scale,
                             1.0 / (2.0 * sigma * sigma), log_norm,
                             a.a.data() + static_cast<std::size_t>(i) * n);
    }
    return a;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = V.log_density(scale * (x[i] - y[j]));
  }
  return a;
}

MarginalMatrix bruteforce_marginals(const LogMatrix& a, int cap,
                                    std::optional<std::uint64_t> order_seed) {
  if (a.n > cap) {
    std::ostringstream msg;
    msg << "brute-force enumeration of " << a.n
        << " points exceeds the factorial cap of " << cap;
    throw EngineCapError(msg.str());
  }
  MarginalMatrix m(a.n);
  if (a.n == 0) return m;
  double best = kNegInf;
  {
    Enumerator e(a, order_seed);
    e.run([&](const std::vector<int>&, double w) { best = std::max(best, w); });
  }
  if (best == kNegInf) throw NumericError("no bijection has positive weight");
  double z = 0.0;
  Enumerator e(a, order_seed);
  e.run([&](const std::vector<int>& pi, double w) {
    const double v = std::exp(w - best);
    z += v;
    for (int i = 0; i < a.n; ++i) m(i, pi[i]) += v;
  });
  for (double& v : m.p) v /= z;
  return m;
}

ExactPosteriorProblem::ExactPosteriorProblem(const ExactInstance& inst)
    : ExactPosteriorProblem(inst.X, inst.Y, inst.model.V,
                            static_cast<double>(inst.model.n)) {}

ExactPosteriorProblem::ExactPosteriorProblem(std::vector<double> X,
                                             std::vector<double> Y,
                                             const PotentialV& V, double scale)
    : x_(std::move(X)), y_(std::move(Y)), v_(V), scale_(scale) {
  a_ = pair_log_weights(x_, y_, v_, scale_);
  s_ = sort_order(x_);
  t_ = sort_order(y_);
  s_inv_ = inverse(s_);
  t_inv_ = inverse(t_);
}

LogMatrix ExactPosteriorProblem::sorted_log_weights() const {
  LogMatrix b(size());
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < size(); ++j) b(i, j) = a_(s_[i], t_[j]);
  }
  return b;
}

double hamiltonian_exact(const ExactPosteriorProblem& prob,
                         const std::vector<int>& pi) {
  const int n = prob.size();
  if (static_cast<int>(pi.size()) != n) {
    throw ContractViolation("pi has the wrong length");
  }
  std::vector<char> seen(n, 0);
  for (int j : pi) {
    if (j < 0 || j >= n || seen[j]) throw ContractViolation("pi is not a bijection");
    seen[j] = 1;
  }
  double h = 0.0;
  for (int i = 0; i < n; ++i) {
    h += prob.V()(prob.scale() * (prob.X()[i] - prob.Y()[pi[i]]));
  }
  return h;
}

double hamiltonian_swap_delta(const ExactPosteriorProblem& prob,
                              const std::vector<int>& pi, int i, int j) {
  const auto& a = prob.log_weights();
  return (a(i, pi[i]) + a(j, pi[j])) - (a(i, pi[j]) + a(j, pi[i]));
}

MarginalMatrix marginals_bruteforce_exact(const ExactPosteriorProblem& prob,
                                          const ExactCaps& caps) {
  return bruteforce_marginals(prob.log_weights(), caps.bruteforce);
}

MarginalMatrix marginals_permanent_exact(const ExactPosteriorProblem& prob,
                                         const ExactCaps& caps) {
  return permanent_marginals(prob.log_weights(), caps.permanent);
}

MarginalMatrix marginals_banded_exact(const ExactPosteriorProblem& prob,
                                      const BandedOptions& opt) {
  const MarginalMatrix sorted = banded_marginals(prob.sorted_log_weights(), opt);
  MarginalMatrix m(prob.size());
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) m(prob.s()[i], prob.t()[j]) = sorted(i, j);
  }
  return m;
}

BlockResult block_center_marginal(const std::vector<double>& xs,
                                  const std::vector<double>& ys, int center,
                                  const PotentialV& V, double scale,
                                  const ExactCaps& caps) {
  const LogMatrix a = pair_log_weights(xs, ys, V, scale);
  BlockResult r;
  if (a.n <= std::min(9, caps.bruteforce)) {
    const MarginalMatrix m = bruteforce_marginals(a, caps.bruteforce);
    r.probs.assign(m.p.begin() + static_cast<std::ptrdiff_t>(center) * a.n,
                   m.p.begin() + static_cast<std::ptrdiff_t>(center + 1) * a.n);
    r.engine = BlockResult::Engine::kEnum;
    return r;
  }
  if (a.n > caps.permanent) {
    std::ostringstream msg;
    msg << "block of " << a.n << " points exceeds the permanent cap of "
        << caps.permanent;
    throw EngineCapError(msg.str());
  }
  r.probs = permanent_row_marginals(a, center, caps.permanent);
  r.engine = BlockResult::Engine::kPermanent;
  return r;
}

MatchDistribution conditional_marginals_empty_boundary(
    const ExactPosteriorProblem& prob, int i, int m, const ExactCaps& caps) {
  const int n = prob.size();
  if (i < 0 || i >= n) throw DomainError("sorted index out of range");
  if (m < 0) throw DomainError("halfwidth must be >= 0");
  const int lo = std::max(i - m, 0);
  const int hi = std::min(i + m, n - 1);
  std::vector<double> xs, ys;
  for (int k = lo; k <= hi; ++k) {
    xs.push_back(prob.X()[prob.s()[k]]);
    ys.push_back(prob.Y()[prob.t()[k]]);
  }
  const BlockResult r = block_center_marginal(xs, ys, i - lo, prob.V(),
                                              prob.scale(), caps);
  MatchDistribution d;
  for (int k = lo; k <= hi; ++k) {
    d.labels.emplace_back(prob.t()[k]);
    d.probs.push_back(r.probs[k - lo]);
  }
  return d;
}

std::string marginal_table_csv(const MarginalMatrix& m) {
  std::string out = "i,j,prob\n";
  char buf[96];
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) {
      if (m(i, j) > 1e-15) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, j, m(i, j));
        out += buf;
      }
    }
  }
  return out;
}

nlohmann::json marginal_table_metadata(const std::string& engine,
                                       std::optional<int> bandwidth,
                                       double runtime_seconds) {
  nlohmann::json j = {{"engine", engine}, {"runtime_seconds", runtime_seconds}};
  j["B"] = bandwidth ? nlohmann::json(*bandwidth) : nlohmann::json(nullptr);
  return j;
}

}  // namespace pmatch
