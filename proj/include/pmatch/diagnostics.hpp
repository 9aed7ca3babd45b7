#pragma once

// Boundary variables, the regularity and locality events used in the locality
// argument, and Metropolis samplers over exact and partial matchings.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pmatch/gibbs_exact.hpp"
#include "pmatch/gibbs_partial.hpp"

namespace pmatch {

struct BoundaryState {
  double location = 0.0;  // l + 1/2 (exact) or x (partial)
  std::vector<std::pair<int, int>> pairs;
};

/// Crossing pairs (k, pi_st(k)) of the sorted-index bijection pi_st at the cut
/// after the first l sorted points: k < l <= pi_st(k) or pi_st(k) < l <= k.
/// The cut sits between 1-based ranks l and l + 1, so location is l + 1/2.
BoundaryState boundary_exact(const std::vector<int>& pi_sorted, int l);

/// Matched pairs with X_k <= x < Y_pi(k) or Y_pi(k) <= x < X_k.
BoundaryState boundary_partial(const std::vector<double>& X, const std::vector<double>& Y,
                               const PartialMatching& pi, double x);

/// pi_st(k) = t_inv(pi(s(k))).
std::vector<int> to_sorted(const ExactPosteriorProblem& prob, const std::vector<int>& pi);

struct SiteEvents {
  int site = 0;  // sorted rank r, boundary between ranks r and r + 1
  bool A = false;
  double C = 0.0;  // posterior frequencies
  double L = 0.0;
  double G = 0.0;
};

struct EventRates {
  int K = 0;
  int L = 0;
  std::size_t samples = 0;
  std::vector<SiteEvents> sites;
  double A_fraction = 0.0;
  /// (1/n) sum_i P(G_i^c).
  double mean_G_complement = 0.0;
  /// Frequency of an empty boundary at sites where L_l holds; -1 if none.
  double iota = -1.0;
};

/// A_r from the data: sorted neighbors within L ranks stay within
/// 3L / (2 lambda_min) after scaling by n, and n |X_s(r) - Y_t(r)| <= L.
std::vector<bool> regularity_events(const ExactPosteriorProblem& prob, int L,
                                    double lambda_min);

/// Averages of C, L and G over posterior samples given in sorted coordinates.
/// G fails at sites r < KL and r >= n - KL.
EventRates event_rates(const ExactPosteriorProblem& prob, double lambda_min, int K, int L,
                       const std::vector<std::vector<int>>& sorted_samples);

/// CSV "site,A,C_frequency,L_frequency,G_frequency".
std::string event_rates_csv(const EventRates& r);

struct McmcOptions {
  std::int64_t burn_in = -1;  // -1: 10 m log m with m the point count
  std::int64_t thin = -1;     // -1: the point count
};

struct McmcStats {
  std::int64_t steps = 0;
  std::int64_t accepted = 0;
  double acceptance() const {
    return steps ? static_cast<double>(accepted) / static_cast<double>(steps) : 0.0;
  }
};

/// Metropolis chain over bijections with uniform transposition proposals,
/// started at the sorted matching. Returns the thinned states after burn-in
/// (`steps` counts post-burn-in steps).
std::vector<std::vector<int>> mcmc_sample_exact(const ExactPosteriorProblem& prob,
                                                std::int64_t steps, std::uint64_t seed,
                                                const McmcOptions& opt = {},
                                                McmcStats* stats = nullptr);
MarginalMatrix mcmc_marginals_exact(const ExactPosteriorProblem& prob, std::int64_t steps,
                                    std::uint64_t seed, const McmcOptions& opt = {},
                                    McmcStats* stats = nullptr);

/// Number of add, remove and swap moves from a state with m matched pairs.
std::int64_t partial_move_count(int nx, int ny, int m);

/// Metropolis-Hastings chain over partial bijections, started empty. Moves
/// are drawn uniformly from all valid add, remove and swap moves; the
/// acceptance includes the ratio of move counts.
std::vector<PartialMatching> mcmc_sample_partial(const PartialPosteriorProblem& prob,
                                                 std::int64_t steps, std::uint64_t seed,
                                                 const McmcOptions& opt = {},
                                                 McmcStats* stats = nullptr);
PartialMarginalTable mcmc_marginals_partial(const PartialPosteriorProblem& prob,
                                            std::int64_t steps, std::uint64_t seed,
                                            const McmcOptions& opt = {},
                                            McmcStats* stats = nullptr);

}  // namespace pmatch
