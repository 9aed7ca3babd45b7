#pragma once

// Posterior over partial bijections for the partial matching model.
//
// With a_ij = -V(scale (X_i - Y_j)) - U(X_i) - U(Y_j), the posterior weight of
// a partial bijection is proportional to exp(sum over matched pairs of a_ij):
// every unmatched point contributes a factor 1.

#include <cstdint>
#include <string>
#include <vector>

#include "pmatch/match_distribution.hpp"
#include "pmatch/sampler.hpp"

namespace pmatch {

class PartialPosteriorProblem {
 public:
  /// U_n is evaluated once per observed point.
  explicit PartialPosteriorProblem(const PartialInstance& inst);
  /// Explicit unmatched potentials, e.g. a constant for the limit measure.
  PartialPosteriorProblem(std::vector<double> X, std::vector<double> Y,
                          const PotentialV& V, double scale,
                          std::vector<double> ux, std::vector<double> uy);

  int nx() const { return static_cast<int>(x_.size()); }
  int ny() const { return static_cast<int>(y_.size()); }
  const std::vector<double>& X() const { return x_; }
  const std::vector<double>& Y() const { return y_; }
  const std::vector<double>& ux() const { return ux_; }
  const std::vector<double>& uy() const { return uy_; }
  const PotentialV& V() const { return v_; }
  double scale() const { return scale_; }

  /// log W_ij = -V(scale (X_i - Y_j)).
  double log_w(int i, int j) const { return logw_[static_cast<std::size_t>(i) * ny() + j]; }
  /// a_ij = log W_ij - U(X_i) - U(Y_j).
  double a(int i, int j) const { return log_w(i, j) - ux_[i] - uy_[j]; }

  /// The problem restricted to the given X and Y indices (in that order).
  PartialPosteriorProblem restrict(const std::vector<int>& xs,
                                   const std::vector<int>& ys) const;

 private:
  std::vector<double> x_, y_;
  PotentialV v_;
  double scale_;
  std::vector<double> ux_, uy_;
  std::vector<double> logw_;
};

/// pi[i] is the Y index of X_i, or nullopt.
using PartialMatching = std::vector<Label>;

/// sum_matched V - sum_unmatched X U - sum_unmatched Y U. ContractViolation
/// when pi is not injective or out of range.
double hamiltonian_partial(const PartialPosteriorProblem& prob,
                           const PartialMatching& pi);

/// sum_k C(a,k) C(b,k) k!. Throws EngineCapError on 64-bit overflow.
std::uint64_t count_partial_bijections(int a, int b);

struct PartialMarginalTable {
  int nx = 0;
  int ny = 0;
  std::vector<double> p;  // row-major, ny + 1 columns; column ny is "unmatched"

  PartialMarginalTable() = default;
  PartialMarginalTable(int rows, int cols)
      : nx(rows), ny(cols), p(static_cast<std::size_t>(rows) * (cols + 1), 0.0) {}
  double& at(int i, int j) { return p[static_cast<std::size_t>(i) * (ny + 1) + j]; }
  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * (ny + 1) + j]; }
  double& empty(int i) { return at(i, ny); }
  double empty(int i) const { return at(i, ny); }
  /// Labels: nullopt, then 0..ny-1.
  MatchDistribution row(int i) const;
  double max_row_sum_error() const;
};

struct PartialCaps {
  std::uint64_t bruteforce_count = 10'000'000;
  int dp_max_ny = 22;
  std::uint64_t dp_max_cells = std::uint64_t{1} << 27;  // (nx + 1) 2^ny
  /// Automatic selection sends larger subset DPs to the sweep when it is
  /// allowed.
  std::uint64_t auto_dp_cells = std::uint64_t{1} << 23;
};

struct SweepOptions {
  /// States whose optimistic score trails the stage maximum by more than
  /// prune_log are dropped; +inf keeps all.
  double prune_log = 20.0;
  std::size_t max_states = 2'000'000;
};

PartialMarginalTable marginals_bruteforce_partial(const PartialPosteriorProblem& prob,
                                                  const PartialCaps& caps = {});
/// Forward-backward over subsets of used Y points.
PartialMarginalTable marginals_dp_partial(const PartialPosteriorProblem& prob,
                                          const PartialCaps& caps = {});
/// Left-to-right sweep over all points by position; the state is the set of
/// points already passed whose partner lies further right.
PartialMarginalTable marginals_sweep_partial(const PartialPosteriorProblem& prob,
                                             const SweepOptions& opt = {});

bool partial_dp_fits(int nx, int ny, const PartialCaps& caps);
bool partial_enum_fits(int nx, int ny, const PartialCaps& caps);

enum class PartialEngine { kAuto, kBruteforce, kDp, kSweep };

/// The engine kAuto resolves to. EngineCapError when nothing fits.
PartialEngine pick_partial_engine(int nx, int ny, const PartialCaps& caps, bool allow_sweep);

struct WindowResult {
  MatchDistribution dist;  // labels are global Y indices and nullopt
  PartialEngine engine = PartialEngine::kAuto;
};

/// Exact local marginal of X_i under the Hamiltonian restricted to points in
/// [lo, hi]. kAuto picks the DP, then enumeration, then (if allow_sweep) the
/// sweep; EngineCapError when none fits.
WindowResult conditional_marginals_window_partial(
    const PartialPosteriorProblem& prob, double lo, double hi, int i,
    const PartialCaps& caps = {}, PartialEngine engine = PartialEngine::kAuto,
    bool allow_sweep = false, const SweepOptions& sweep = {});

/// Whole-table counterpart of the engine selection above.
PartialMarginalTable marginals_partial(const PartialPosteriorProblem& prob,
                                       PartialEngine engine,
                                       const PartialCaps& caps = {},
                                       const SweepOptions& sweep = {},
                                       PartialEngine* used = nullptr);

std::string engine_name(PartialEngine e);

/// CSV rows "i,j,prob" with j = -1 for unmatched, entries above 1e-15.
std::string partial_table_csv(const PartialMarginalTable& m);

}  // namespace pmatch
