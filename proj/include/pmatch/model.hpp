#pragma once

// Noise potential V, location density Lambda, and the pair-density
// normalizers Z_n, p_n(x), U_n(x) of the one-dimensional matching model.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pmatch/rng.hpp"

namespace pmatch {

/// Power-law envelope (c, delta, C) with
/// C(1 + |e|^C) >= V(e) - V_min >= c |e|^(1 + delta).
/// Stored for diagnostics only; the constants are user-supplied.
struct Envelope {
  double c = 0.0;
  double delta = 0.0;
  double C = 0.0;
};

class PotentialV {
 public:
  enum class Kind { kGaussian, kPower, kTabulated, kPointMass };

  /// V(e) = e^2 / (2 sigma^2) + log(sigma sqrt(2 pi)).
  static PotentialV gaussian(double sigma);
  /// V(e) = c |e|^(1+delta) + log(2 Gamma(1 + 1/(1+delta)) c^(-1/(1+delta))).
  static PotentialV power(double c, double delta);
  /// Linear interpolation of V on a symmetric grid. With normalize=true the
  /// table is shifted so that exp(-V) integrates to one over the grid.
  static PotentialV tabulated(std::vector<double> eps, std::vector<double> v,
                              bool normalize = true);
  /// Degenerate noise q = delta_0 (test device): V(0) = 0, +inf elsewhere.
  static PotentialV point_mass();

  Kind kind() const { return kind_; }

  /// V(e). Tabulated potentials throw DomainError outside the grid.
  double operator()(double eps) const;
  /// log q(e) = -V(e); -inf where q vanishes (outside a tabulated grid).
  double log_density(double eps) const;

  double v_min() const { return v_min_; }
  Envelope envelope() const { return envelope_; }
  void set_envelope(const Envelope& e) { envelope_ = e; }

  /// |e| beyond which q is treated as zero in quadrature (12 sigma for the
  /// Gaussian, q/q(0) < 1e-30 for power laws, the grid edge when tabulated).
  double support_radius() const;
  /// r with P(|eps| > r) = tail under q.
  double quantile_radius(double tail) const;
  /// Kinks of q inside the support (tabulated grid nodes).
  std::vector<double> kinks() const;

  double sample(CounterRng& rng) const;

  /// Integral of exp(-V) over the support window.
  double normalization() const;

  double sigma() const { return a_; }  // Gaussian only

  std::string canonical() const;
  nlohmann::json to_json() const;
  static PotentialV from_json(const nlohmann::json& j);

 private:
  PotentialV() = default;
  double interp(double eps) const;

  Kind kind_ = Kind::kGaussian;
  double a_ = 1.0;      // sigma (gaussian) or c (power)
  double b_ = 1.0;      // delta (power)
  double shift_ = 0.0;  // additive normalization constant
  double v_min_ = 0.0;
  std::vector<double> grid_eps_;
  std::vector<double> grid_v_;
  std::vector<double> grid_cdf_;  // cumulative segment masses, for sampling
  Envelope envelope_;
};

/// Probability density on [0, 1] bounded away from zero.
class DensityLambda {
 public:
  static DensityLambda uniform();
  /// Piecewise-linear through (xs[k], values[k]); xs must start at 0, end at
  /// 1 and increase. Throws DomainError unless it integrates to 1 within
  /// 1e-10 and is strictly positive.
  static DensityLambda piecewise_linear(std::vector<double> xs,
                                        std::vector<double> values);
  /// As above after rescaling the values to unit mass.
  static DensityLambda normalized_piecewise_linear(std::vector<double> xs,
                                                   std::vector<double> values);

  bool is_uniform() const { return xs_.size() == 2 && vs_[0] == vs_[1]; }

  /// Lambda(x); DomainError for x outside [0, 1].
  double operator()(double x) const;
  double lambda_min() const { return min_; }
  double lambda_max() const { return max_; }
  /// Interior grid nodes.
  std::vector<double> kinks() const;

  /// x ~ Lambda by rejection from the uniform proposal.
  double sample(CounterRng& rng) const;

  std::string canonical() const;
  nlohmann::json to_json() const;
  static DensityLambda from_json(const nlohmann::json& j);

 private:
  std::vector<double> xs_;
  std::vector<double> vs_;
  double min_ = 1.0;
  double max_ = 1.0;
};

struct ModelParams {
  int n = 1;
  double p = 0.5;
  double quadrature_tol = 1e-8;

  void validate() const;
};

/// Z_n = int int sqrt(Lambda(x) Lambda(y)) exp(-V(n (x - y))) dx dy.
/// Memoized per (V, Lambda, n).
double z_n(const PotentialV& V, const DensityLambda& lam, int n,
           double tol = 1e-8);

/// Marginal density p_n(x) of one coordinate of the pair; DomainError for x
/// outside [0, 1].
double p_n_marginal(const PotentialV& V, const DensityLambda& lam, int n,
                    double x, double tol = 1e-8);

/// U_n(x) = log(p_n(x) / sqrt(Lambda(x))).
double u_n(const PotentialV& V, const DensityLambda& lam, int n, double x,
           double tol = 1e-8);

/// Drop all memoized Z_n and p_n values.
void clear_model_cache();

/// Maximum over the grid of |V(e) - V(-e)|.
double symmetry_defect(const PotentialV& V, std::span<const double> grid);

/// Whether V - V_min >= c |e|^(1+delta) holds on the grid for the stored
/// envelope.
bool lower_envelope_holds(const PotentialV& V, std::span<const double> grid);

/// 64-bit FNV-1a content hash (used for cache keys and manifests).
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace pmatch
