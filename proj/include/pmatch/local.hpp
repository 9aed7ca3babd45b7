#pragma once

// Local approximations of posterior marginals: the windowed partial-matching
// posterior, sort-then-local for exact matching, and the flow-and-reordering
// variant with its flow statistics.

#include <string>
#include <vector>

#include "pmatch/gibbs_exact.hpp"
#include "pmatch/gibbs_partial.hpp"

namespace pmatch {

struct SortMaps {
  std::vector<int> s;  // X[s[k]] is the k-th smallest, ties by index
  std::vector<int> t;
};

SortMaps sort_maps(const std::vector<double>& X, const std::vector<double>& Y);

enum class EngineFlag { kEnum, kPermanent, kDp, kSweep, kFallback, kSkipped };
std::string flag_name(EngineFlag f);

struct LocalRow {
  MatchDistribution dist;  // empty when skipped
  EngineFlag flag = EngineFlag::kEnum;
};

struct PartialLocalOptions {
  PartialCaps caps;
  /// Windows beyond the DP and enumeration caps run on the sweep engine;
  /// otherwise they are skipped.
  bool allow_sweep = true;
  SweepOptions sweep;
};

/// Window [max(0, (floor(n X_i) - M)/n), min(1, (floor(n X_i) + M)/n)].
std::pair<double, double> partial_window(double x, int n, int M);

/// Local posterior of every X_i over the points in its window. Points that
/// share floor(n X_i) share one computation.
std::vector<LocalRow> local_marginals_partial(const PartialPosteriorProblem& prob,
                                              int n, int M,
                                              const PartialLocalOptions& opt = {});

/// Sort-then-local for exact matching: row i is the center marginal of the
/// sorted block of half-width M around X_i, over original Y labels.
std::vector<LocalRow> local_marginals_exact(const ExactPosteriorProblem& prob, int M,
                                            const ExactCaps& caps = {});

struct FlowStats {
  int i = 0;
  double D = 0.0;
  int L = 0, R = 0, F = 0;
  int LD = 0, RD = 0, FD = 0;
};

/// Direct counts over all j (global) and over the D/n window around X_i
/// (local).
FlowStats flow_stats(const ExactInstance& inst, int i, double D);

/// 3M / (2 Lambda_min) + M + 1.
double default_flow_radius(int M, double lambda_min);

/// Flow-and-reordering marginals using the truth. Rows whose neighbor lists
/// leave the D-window (or run out of points) are point masses at pi*(i) with
/// the fallback flag.
std::vector<LocalRow> tilde_marginals_exact(const ExactInstance& inst, int M, double D,
                                            const ExactCaps& caps = {});

/// CSV "i,j,prob,engine_flag" (j = -1 for unmatched), entries above 1e-15;
/// skipped rows appear once with empty j and prob.
std::string local_rows_csv(const std::vector<LocalRow>& rows);

}  // namespace pmatch
