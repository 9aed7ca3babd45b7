#pragma once

// Flow of index bijections and the local Gibbs measures Q_K on windows of the
// limiting point processes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pmatch/gibbs_exact.hpp"
#include "pmatch/gibbs_partial.hpp"
#include "pmatch/sampler.hpp"

namespace pmatch {

/// Map from the x-index interval [x_lo, x_lo + size) to y-indices.
struct IndexedBijection {
  std::int64_t x_lo = 0;
  std::vector<Label> y;

  std::int64_t x_hi() const { return x_lo + static_cast<std::int64_t>(y.size()) - 1; }
  /// ContractViolation unless injective.
  void check() const;

  /// The truth of a configuration in index coordinates.
  static IndexedBijection truth(const PPPConfiguration& cfg);
  /// i -> i + by on [lo, hi].
  static IndexedBijection shift(std::int64_t lo, std::int64_t hi, std::int64_t by);
};

struct Flow {
  std::int64_t L = 0;
  std::int64_t R = 0;
  std::int64_t F = 0;
};

/// L_a = #{i <= a : pi(i) > a}, R_a = #{i > a : pi(i) <= a}. DomainError
/// when a lies outside [x_lo, x_hi].
Flow flow_of_bijection(const IndexedBijection& pi, std::int64_t a);

/// a-values at which every crossing of the (finite) truth is observed: the
/// overlap of the x- and y-index ranges.
std::pair<std::int64_t, std::int64_t> interior_indices(const PPPConfiguration& cfg);

enum class UConvention { kLogSqrt, kSqrt };
std::string u_convention_name(UConvention u);
UConvention parse_u_convention(const std::string& s);

struct QkMarginal {
  int K = 0;
  std::int64_t F_star = 0;
  MatchDistribution probs;  // labels are y-indices (nullopt for unmatched)
  std::string engine;
};

struct QkOptions {
  int permanent_cap = 20;
  BandedOptions banded{31, 45.0, 4'000'000};
  PartialCaps partial_caps;
  SweepOptions sweep{16.0, 2'000'000};
};

/// Marginal of index 0 under Q_K over bijections {-K..K} -> {-K+F*..K+F*}.
/// WindowTooSmall when an index is missing from the sample.
QkMarginal qk_marginal_exact(const PPPConfiguration& cfg, const PotentialV& V, int K,
                             const QkOptions& opt = {});

/// Marginal of the origin over partial bijections between the points in
/// [-K, K], with unmatched points weighted by exp(U).
QkMarginal qk_marginal_partial(const PPPConfiguration& cfg, const PotentialV& V, int K,
                               UConvention u = UConvention::kLogSqrt,
                               const QkOptions& opt = {});

struct CauchyRow {
  int K = 0;
  int K2 = 0;
  double mean_tv = 0.0;
  double se = 0.0;
  int reps = 0;
  double skip_rate = 0.0;
};

struct CauchyConfig {
  DensityLambda lambda = DensityLambda::uniform();
  std::optional<double> p;  // set for the partial limit
  PotentialV V = PotentialV::gaussian(1.0);
  std::vector<int> K_list;
  int reps = 1;
  std::uint64_t seed = 0;
  UConvention u = UConvention::kLogSqrt;
  QkOptions opt;
  int threads = 1;
};

/// One coupled sample per replicate; TV between Q_K^0 at consecutive K.
std::vector<CauchyRow> check_qk_cauchy(const CauchyConfig& cfg);

/// Position halfwidth whose complete region holds the index range [-K, K]
/// with overwhelming probability when the rate is at least rate_min.
double sample_halfwidth(int K, double rate_min);

std::string cauchy_csv(const std::vector<CauchyRow>& rows);

}  // namespace pmatch
