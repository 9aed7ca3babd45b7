#pragma once

// Posterior marginals over bijections for the exact matching model.
//
// All engines work on a square matrix of log-weights a_ij; the posterior is
// P(pi) proportional to exp(sum_i a_{i,pi(i)}). Entries may be -inf.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmatch/match_distribution.hpp"
#include "pmatch/rng.hpp"
#include "pmatch/sampler.hpp"

namespace pmatch {

struct LogMatrix {
  int n = 0;
  std::vector<double> a;  // row-major

  LogMatrix() = default;
  explicit LogMatrix(int size, double fill = 0.0)
      : n(size), a(static_cast<std::size_t>(size) * size, fill) {}
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  double operator()(int i, int j) const {
    return a[static_cast<std::size_t>(i) * n + j];
  }
};

/// Dense n x n matrix of marginal probabilities P(pi(i) = j).
struct MarginalMatrix {
  int n = 0;
  std::vector<double> p;

  MarginalMatrix() = default;
  explicit MarginalMatrix(int size)
      : n(size), p(static_cast<std::size_t>(size) * size, 0.0) {}
  double& operator()(int i, int j) { return p[static_cast<std::size_t>(i) * n + j]; }
  double operator()(int i, int j) const {
    return p[static_cast<std::size_t>(i) * n + j];
  }
  MatchDistribution row(int i) const;
  double max_row_sum_error() const;
  double max_col_sum_error() const;
};

/// log-weights a_ij = -V(scale * (x_i - y_j)).
LogMatrix pair_log_weights(const std::vector<double>& x,
                           const std::vector<double>& y, const PotentialV& V,
                           double scale);

struct ExactCaps {
  int bruteforce = 10;
  int permanent = 20;
  int max_bandwidth = 31;
};

// --- generic engines -------------------------------------------------------

/// n! enumeration with log-sum-exp normalization. When order_seed is given
/// the candidate order at every depth is shuffled (same result up to
/// rounding).
MarginalMatrix bruteforce_marginals(const LogMatrix& a, int cap = 10,
                                    std::optional<std::uint64_t> order_seed = {});

/// Ryser's formula with Gray-code subset order after log-space Sinkhorn
/// balancing. All minors are accumulated in one sweep.
MarginalMatrix permanent_marginals(const LogMatrix& a, int cap = 20);
/// Marginal row of a single index (one sweep, O(2^n n)).
std::vector<double> permanent_row_marginals(const LogMatrix& a, int row,
                                            int cap = 20);
/// perm of a nonnegative matrix given in linear scale (row-major).
double permanent(const std::vector<double>& w, int n);
/// log perm(exp(a)).
double log_permanent(const LogMatrix& a, int cap = 20);

struct BandedOptions {
  int bandwidth = 20;
  /// States whose score (forward value times the sorted completion) is below
  /// the stage maximum by more than prune_log are dropped; +inf keeps all.
  double prune_log = 45.0;
  std::size_t max_states = 4'000'000;  // per stage
};

/// Transfer DP over bijections of a matrix whose rows and columns are already
/// in sorted order, restricted to |pi(i) - i| <= bandwidth.
class BandedTransfer {
 public:
  BandedTransfer(const LogMatrix& sorted, const BandedOptions& opt);

  MarginalMatrix marginals() const;
  /// Exact draw from the (band-restricted, pruned) law.
  std::vector<int> sample(CounterRng& rng) const;
  double log_partition() const { return log_z_; }
  int bandwidth() const { return band_; }
  std::size_t max_stage_states() const;

 private:
  struct Stage {
    std::vector<std::uint64_t> masks;  // sorted
    std::vector<double> fwd;           // scaled forward values
    std::vector<double> bwd;           // scaled backward values
    double fwd_log = 0.0;
    double bwd_log = 0.0;
    std::ptrdiff_t find(std::uint64_t m) const;
  };

  void forward(const BandedOptions& opt);
  void backward();

  LogMatrix a_;
  int n_;
  int band_;
  std::vector<double> row_max_;
  std::vector<Stage> stages_;
  double log_z_ = 0.0;
};

MarginalMatrix banded_marginals(const LogMatrix& sorted, const BandedOptions& opt);

// --- the exact-model posterior ---------------------------------------------

class ExactPosteriorProblem {
 public:
  explicit ExactPosteriorProblem(const ExactInstance& inst);
  ExactPosteriorProblem(std::vector<double> X, std::vector<double> Y,
                        const PotentialV& V, double scale);

  int size() const { return a_.n; }
  const LogMatrix& log_weights() const { return a_; }
  const std::vector<double>& X() const { return x_; }
  const std::vector<double>& Y() const { return y_; }
  const PotentialV& V() const { return v_; }
  double scale() const { return scale_; }

  /// Sorting permutations: x_[s[k]] is the k-th smallest (ties by index).
  const std::vector<int>& s() const { return s_; }
  const std::vector<int>& t() const { return t_; }
  const std::vector<int>& s_inv() const { return s_inv_; }
  const std::vector<int>& t_inv() const { return t_inv_; }
  /// log-weights in sorted coordinates.
  LogMatrix sorted_log_weights() const;

 private:
  std::vector<double> x_, y_;
  PotentialV v_;
  double scale_;
  LogMatrix a_;
  std::vector<int> s_, t_, s_inv_, t_inv_;
};

/// sum_i V(scale (X_i - Y_pi(i))); ContractViolation unless pi is a bijection.
double hamiltonian_exact(const ExactPosteriorProblem& prob,
                         const std::vector<int>& pi);
/// H(pi o (i j)) - H(pi) from the four affected terms.
double hamiltonian_swap_delta(const ExactPosteriorProblem& prob,
                              const std::vector<int>& pi, int i, int j);

MarginalMatrix marginals_bruteforce_exact(const ExactPosteriorProblem& prob,
                                          const ExactCaps& caps = {});
MarginalMatrix marginals_permanent_exact(const ExactPosteriorProblem& prob,
                                         const ExactCaps& caps = {});
MarginalMatrix marginals_banded_exact(const ExactPosteriorProblem& prob,
                                      const BandedOptions& opt);

/// Law of pi_st(i) under the posterior conditioned on empty boundaries at
/// i - m - 1/2 and i + m + 1/2 (sorted index i, 0-based), as a distribution
/// over original Y labels.
MatchDistribution conditional_marginals_empty_boundary(
    const ExactPosteriorProblem& prob, int i, int m, const ExactCaps& caps = {});

/// Marginal row of `center` for the block posterior between x-values xs and
/// y-values ys (both sorted), as probabilities over positions in ys. Uses
/// enumeration up to 9 points and permanents up to caps.permanent.
struct BlockResult {
  std::vector<double> probs;
  enum class Engine { kEnum, kPermanent } engine = Engine::kEnum;
};
BlockResult block_center_marginal(const std::vector<double>& xs,
                                  const std::vector<double>& ys, int center,
                                  const PotentialV& V, double scale,
                                  const ExactCaps& caps = {});

/// CSV rows "i,j,prob" for entries above 1e-15 (with header).
std::string marginal_table_csv(const MarginalMatrix& m);
nlohmann::json marginal_table_metadata(const std::string& engine,
                                       std::optional<int> bandwidth,
                                       double runtime_seconds);

}  // namespace pmatch
