#pragma once

// Experiment configuration and the sweeps behind the CLI subcommands.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmatch/diagnostics.hpp"
#include "pmatch/gibbs_exact.hpp"
#include "pmatch/gibbs_partial.hpp"
#include "pmatch/local.hpp"
#include "pmatch/match_distribution.hpp"
#include "pmatch/ppp_gibbs.hpp"

namespace pmatch {

enum class ModelKind { kExact, kPartial };

struct ExperimentConfig {
  ModelKind kind = ModelKind::kExact;
  PotentialV V = PotentialV::gaussian(1.0);
  DensityLambda lambda = DensityLambda::uniform();
  std::vector<int> n_list{20};
  double p = 0.5;
  std::vector<int> M_list{1, 2, 4};
  std::optional<double> D;  // flow radius; default rule when unset
  std::vector<int> K_list{4, 8, 12, 16};
  int reps = 10;
  std::optional<std::uint64_t> seed;
  ExactCaps exact_caps;
  BandedOptions banded;
  bool band_check = true;  // ground truth at B and B + 5 must agree
  PartialCaps partial_caps;
  SweepOptions sweep;        // partial ground truth
  SweepOptions local_sweep{14.0, 2'000'000};  // Algorithm 1 windows
  std::string out = ".";
  std::vector<FSpec> f_specs{FSpec{}};
  UConvention u = UConvention::kLogSqrt;
  std::string algorithm = "sort";  // exact local algorithm: sort | flow
  std::string engine = "auto";
  int threads = 1;
  std::int64_t mcmc_steps = 200000;
  int diag_K = 2;
  int diag_L = 3;
  int diag_samples = 200;
  double quadrature_tol = 1e-8;

  /// Unknown keys and wrong types raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Lists nonempty, seed present, parameters in range.
  void validate() const;
  /// Hash of the canonical JSON form.
  std::string hash() const;
  ModelSpec model(int n) const;
};

std::string kind_name(ModelKind k);

/// Seed of replicate `rep` at size n.
std::uint64_t instance_seed(std::uint64_t seed, int n, int rep);

struct GroundTruth {
  std::vector<MatchDistribution> rows;  // per original X index
  std::string engine;
};

/// Exact posterior rows: enumeration, permanents, or the banded DP with its
/// self-consistency check.
GroundTruth exact_ground_truth(const ExactPosteriorProblem& prob, const ExperimentConfig& cfg);
GroundTruth partial_ground_truth(const PartialPosteriorProblem& prob,
                                 const ExperimentConfig& cfg);

/// Local rows for one M (Algorithm 2, 3 or 1 by kind and cfg.algorithm).
std::vector<LocalRow> local_rows_exact(const ExactInstance& inst, int M,
                                       const ExperimentConfig& cfg);
std::vector<LocalRow> local_rows_partial(const PartialInstance& inst, int M,
                                         const ExperimentConfig& cfg);

struct TvRow {
  int n = 0;
  int M = 0;
  double mean_tv = 0.0;
  double se = 0.0;
  int reps = 0;
  double skip_rate = 0.0;
};

/// Mean over instances of the average row TV between local and exact
/// marginals, for every (n, M).
std::vector<TvRow> tv_experiment(const ExperimentConfig& cfg);
std::string tv_csv(const std::vector<TvRow>& rows);

struct CostRow {
  std::string f;
  int n = 0;
  double finite_mean = 0.0;
  double finite_se = 0.0;
  double limit_mean = 0.0;
  double limit_se = 0.0;
  int reps = 0;
  int limit_reps = 0;
};

struct LimitResult {
  std::vector<CauchyRow> cauchy;
  std::vector<CostRow> costs;
};

/// Cauchy table over cfg.K_list and, per f_spec and n, the finite-n cost
/// average against the Q_K estimate at the largest K.
LimitResult limit_experiment(const ExperimentConfig& cfg);
std::string costs_csv(const std::vector<CostRow>& rows);

struct DiagnosticsRun {
  int n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  EventRates rates;
};

/// Event rates on exact instances from exact banded draws (engine "auto") or
/// the transposition chain (engine "mcmc").
std::vector<DiagnosticsRun> diagnostics_experiment(const ExperimentConfig& cfg);
std::string diagnostics_summary_csv(const std::vector<DiagnosticsRun>& runs);

}  // namespace pmatch
