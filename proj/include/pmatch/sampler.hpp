#pragma once

// Generative samplers for the exact and partial matching models and for
// finite windows of their Poisson-point-process limits.

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "pmatch/match_distribution.hpp"
#include "pmatch/model.hpp"

namespace pmatch {

inline constexpr int kInstanceSchemaVersion = 1;

struct ModelSpec {
  PotentialV V = PotentialV::gaussian(1.0);
  DensityLambda lambda = DensityLambda::uniform();
  int n = 1;
  double p = 0.5;
  double quadrature_tol = 1e-8;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct SamplerOptions {
  long max_attempts = 1'000'000;  // rejection budget per pair
};

struct ExactInstance {
  ModelSpec model;
  std::vector<double> X;
  std::vector<double> Y;
  std::vector<int> pi_star;  // X[i] <-> Y[pi_star[i]]
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(X.size()); }
  void validate() const;
};

enum class Mark : std::uint8_t { kXY, kX, kY, kNone };

struct PartialInstance {
  ModelSpec model;
  int N = 0;                 // latent pair count
  std::vector<Mark> marks;   // per latent pair
  std::vector<int> pi_x;     // observed X index -> latent pair
  std::vector<int> pi_y;     // observed Y index -> latent pair
  std::vector<double> X;
  std::vector<double> Y;
  std::vector<Label> pi_star;  // per X index; nullopt = unmatched
  std::uint64_t seed = 0;

  int nx() const { return static_cast<int>(X.size()); }
  int ny() const { return static_cast<int>(Y.size()); }
  void validate() const;
};

/// One draw (X, Y) from p_n by rejection: X uniform, eps ~ q, Y = X + eps/n,
/// accepted with probability sqrt(Lambda(X) Lambda(Y)) / Lambda_max.
std::pair<double, double> sample_pair(const PotentialV& V,
                                      const DensityLambda& lam, int n,
                                      CounterRng& rng, long max_attempts);

ExactInstance sample_exact_instance(const ModelSpec& model, std::uint64_t seed,
                                    const SamplerOptions& opt = {});
PartialInstance sample_partial_instance(const ModelSpec& model,
                                        std::uint64_t seed,
                                        const SamplerOptions& opt = {});

enum class PPPKind { kExact, kPartial };

/// A finite window of the coupled limit processes. Points are stored sorted;
/// the index of x_points[k] is k - x_origin and that of y_points[k] is
/// k - y_origin. For the exact kind y index 0 is the partner of the origin;
/// for the partial kind it is the first y-point at or right of 0.
struct PPPConfiguration {
  PPPKind kind = PPPKind::kExact;
  double K = 1.0;        // requested halfwidth
  double halfwidth = 1.0;  // generated x-range [-halfwidth, halfwidth]
  double x_anchor = 0.5;   // sampled location x ~ Lambda
  double rate = 1.0;       // Lambda(x_anchor)
  double p = 0.5;
  std::vector<double> x_points;
  std::vector<double> y_points;
  std::int64_t x_origin = 0;
  std::int64_t y_origin = 0;
  std::vector<Label> truth;  // per x position: y position of the partner
  std::uint64_t seed = 0;

  std::int64_t x_index(std::size_t pos) const {
    return static_cast<std::int64_t>(pos) - x_origin;
  }
  std::int64_t y_index(std::size_t pos) const {
    return static_cast<std::int64_t>(pos) - y_origin;
  }
  /// Positions of indices; out-of-range indices give -1.
  std::int64_t x_pos(std::int64_t index) const;
  std::int64_t y_pos(std::int64_t index) const;
};

/// x-points are generated on [-K - Mq, K + Mq] with Mq the 1 - 1e-9 quantile
/// radius of q, so the y-side inside [-K, K] is complete up to that tail.
PPPConfiguration sample_ppp_exact(const DensityLambda& lam, const PotentialV& V,
                                  double K, std::uint64_t seed);
PPPConfiguration sample_ppp_partial(const DensityLambda& lam, double p,
                                    const PotentialV& V, double K,
                                    std::uint64_t seed);

nlohmann::json to_json(const ExactInstance& inst);
nlohmann::json to_json(const PartialInstance& inst);
nlohmann::json to_json(const PPPConfiguration& cfg);
ExactInstance exact_instance_from_json(const nlohmann::json& j);
PartialInstance partial_instance_from_json(const nlohmann::json& j);

/// JSON text with doubles printed to 17 significant digits.
std::string dump_json(const nlohmann::json& j);

}  // namespace pmatch
