#include "pmatch/model.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

#include "pmatch/error.hpp"
#include "pmatch/quadrature.hpp"

namespace pmatch {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

// Mass of exp(-(va + (vb - va) t / w)) over t in [0, w].
double segment_mass(double va, double vb, double w) {
  const double d = vb - va;
  if (std::abs(d) < 1e-12) return w * std::exp(-0.5 * (va + vb));
  return w * std::exp(-va) * (-std::expm1(-d)) / d;
}

}  // namespace

// ---------------------------------------------------------------------------
// PotentialV

PotentialV PotentialV::gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("gaussian potential needs sigma > 0");
  }
  PotentialV v;
  v.kind_ = Kind::kGaussian;
  v.a_ = sigma;
  v.shift_ = std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  v.v_min_ = v.shift_;
  v.envelope_ = {1.0 / (2.0 * sigma * sigma), 1.0,
                 std::max(2.0, 1.0 / (2.0 * sigma * sigma))};
  return v;
}

PotentialV PotentialV::power(double c, double delta) {
  if (!(c > 0.0) || !(delta > 0.0)) {
    throw DomainError("power potential needs c > 0 and delta > 0");
  }
  PotentialV v;
  v.kind_ = Kind::kPower;
  v.a_ = c;
  v.b_ = delta;
  const double a = 1.0 + delta;
  v.shift_ = std::log(2.0) + std::lgamma(1.0 + 1.0 / a) - std::log(c) / a;
  v.v_min_ = v.shift_;
  v.envelope_ = {c, delta, std::max(a, c)};
  return v;
}

PotentialV PotentialV::tabulated(std::vector<double> eps, std::vector<double> vals,
                                 bool normalize) {
  const std::size_t m = eps.size();
  if (m < 2 || vals.size() != m) {
    throw DomainError("tabulated potential needs >= 2 matching grid values");
  }
  for (std::size_t k = 0; k + 1 < m; ++k) {
    if (!(eps[k + 1] > eps[k])) {
      throw DomainError("tabulated potential grid must increase");
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (std::abs(eps[k] + eps[m - 1 - k]) > 1e-12 ||
        std::abs(vals[k] - vals[m - 1 - k]) > 1e-12) {
      throw DomainError("tabulated potential must be symmetric about 0");
    }
  }
  PotentialV v;
  v.kind_ = Kind::kTabulated;
  v.grid_eps_ = std::move(eps);
  v.grid_v_ = std::move(vals);
  if (normalize) {
    v.shift_ = std::log(v.normalization());
  }
  v.grid_cdf_.assign(m, 0.0);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    v.grid_cdf_[k + 1] =
        v.grid_cdf_[k] + segment_mass(v.grid_v_[k] + v.shift_,
                                      v.grid_v_[k + 1] + v.shift_,
                                      v.grid_eps_[k + 1] - v.grid_eps_[k]);
  }
  v.v_min_ = *std::min_element(v.grid_v_.begin(), v.grid_v_.end()) + v.shift_;
  return v;
}

PotentialV PotentialV::point_mass() {
  PotentialV v;
  v.kind_ = Kind::kPointMass;
  v.v_min_ = 0.0;
  return v;
}

double PotentialV::interp(double eps) const {
  eps = std::abs(eps);
  const auto it = std::upper_bound(grid_eps_.begin(), grid_eps_.end(), eps);
  std::size_t k = static_cast<std::size_t>(it - grid_eps_.begin());
  if (k == 0) k = 1;
  if (k >= grid_eps_.size()) k = grid_eps_.size() - 1;
  const double x0 = grid_eps_[k - 1];
  const double x1 = grid_eps_[k];
  const double t = (eps - x0) / (x1 - x0);
  return grid_v_[k - 1] + t * (grid_v_[k] - grid_v_[k - 1]) + shift_;
}

double PotentialV::operator()(double eps) const {
  switch (kind_) {
    case Kind::kGaussian:
      return eps * eps / (2.0 * a_ * a_) + shift_;
    case Kind::kPower:
      return a_ * std::pow(std::abs(eps), 1.0 + b_) + shift_;
    case Kind::kTabulated:
      if (eps < grid_eps_.front() || eps > grid_eps_.back()) {
        std::ostringstream msg;
        msg << "eps = " << eps << " outside tabulated support ["
            << grid_eps_.front() << ", " << grid_eps_.back() << "]";
        throw DomainError(msg.str());
      }
      return interp(eps);
    case Kind::kPointMass:
      return eps == 0.0 ? 0.0 : kInf;
  }
  return kInf;
}

double PotentialV::log_density(double eps) const {
  if (kind_ == Kind::kTabulated &&
      (eps < grid_eps_.front() || eps > grid_eps_.back())) {
    return -kInf;
  }
  return -(*this)(eps);
}

double PotentialV::support_radius() const {
  switch (kind_) {
    case Kind::kGaussian:
      return 12.0 * a_;
    case Kind::kPower:
      // c r^(1+delta) = 70 gives q(r)/q(0) = e^-70 < 1e-30.
      return std::pow(70.0 / a_, 1.0 / (1.0 + b_));
    case Kind::kTabulated:
      return grid_eps_.back();
    case Kind::kPointMass:
      return 0.0;
  }
  return 0.0;
}

double PotentialV::quantile_radius(double tail) const {
  if (!(tail > 0.0 && tail < 1.0)) throw DomainError("tail must be in (0,1)");
  switch (kind_) {
    case Kind::kGaussian:
      return a_ * std::sqrt(2.0) * boost::math::erfc_inv(tail);
    case Kind::kPower: {
      const double a = 1.0 + b_;
      return std::pow(boost::math::gamma_q_inv(1.0 / a, tail) / a_, 1.0 / a);
    }
    case Kind::kTabulated: {
      // Symmetric: find r with mass(|eps| > r) = tail, i.e. CDF(-r) = tail/2.
      const double total = grid_cdf_.back();
      const double target = 0.5 * tail * total;
      for (std::size_t k = 0; k + 1 < grid_cdf_.size(); ++k) {
        if (grid_cdf_[k + 1] >= target) {
          double lo = grid_eps_[k];
          double hi = grid_eps_[k + 1];
          for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double mass =
                grid_cdf_[k] + segment_mass(interp(grid_eps_[k]),
                                            interp(mid), mid - grid_eps_[k]);
            (mass < target ? lo : hi) = mid;
          }
          return std::abs(0.5 * (lo + hi));
        }
      }
      return grid_eps_.back();
    }
    case Kind::kPointMass:
      return 0.0;
  }
  return 0.0;
}

std::vector<double> PotentialV::kinks() const {
  if (kind_ != Kind::kTabulated) return {};
  return {grid_eps_.begin() + 1, grid_eps_.end() - 1};
}

double PotentialV::sample(CounterRng& rng) const {
  switch (kind_) {
    case Kind::kGaussian:
      return a_ * rng.normal();
    case Kind::kPower: {
      // c |eps|^(1+delta) ~ Gamma(1 / (1 + delta), 1), symmetric sign.
      const double a = 1.0 + b_;
      std::gamma_distribution<double> g(1.0 / a, 1.0);
      const double r = std::pow(g(rng) / a_, 1.0 / a);
      return (rng() & 1u) ? r : -r;
    }
    case Kind::kTabulated: {
      const double u = rng.uniform() * grid_cdf_.back();
      auto it = std::upper_bound(grid_cdf_.begin(), grid_cdf_.end(), u);
      std::size_t k = static_cast<std::size_t>(it - grid_cdf_.begin());
      k = std::clamp<std::size_t>(k, 1, grid_cdf_.size() - 1) - 1;
      const double w = grid_eps_[k + 1] - grid_eps_[k];
      const double s = (grid_v_[k + 1] - grid_v_[k]) / w;
      const double mass = grid_cdf_[k + 1] - grid_cdf_[k];
      const double frac = mass > 0.0 ? (u - grid_cdf_[k]) / mass : rng.uniform();
      double t;
      if (std::abs(s * w) < 1e-12) {
        t = frac * w;
      } else {
        // Invert (1 - e^{-s t}) / (1 - e^{-s w}) = frac.
        t = -std::log1p(frac * std::expm1(-s * w)) / s;
      }
      return grid_eps_[k] + std::clamp(t, 0.0, w);
    }
    case Kind::kPointMass:
      return 0.0;
  }
  return 0.0;
}

double PotentialV::normalization() const {
  switch (kind_) {
    case Kind::kPointMass:
      return 1.0;
    case Kind::kTabulated: {
      double total = 0.0;
      for (std::size_t k = 0; k + 1 < grid_eps_.size(); ++k) {
        total += segment_mass(grid_v_[k] + shift_, grid_v_[k + 1] + shift_,
                              grid_eps_[k + 1] - grid_eps_[k]);
      }
      return total;
    }
    default: {
      const double r = support_radius();
      const std::vector<double> cuts{0.0};
      return integrate_pieces(
                 [this](double e) { return std::exp(-(*this)(e)); }, -r, r,
                 cuts, 1e-13)
          .value;
    }
  }
}

std::string PotentialV::canonical() const {
  std::ostringstream s;
  switch (kind_) {
    case Kind::kGaussian:
      s << "gaussian:" << hexfloat(a_);
      break;
    case Kind::kPower:
      s << "power:" << hexfloat(a_) << ":" << hexfloat(b_);
      break;
    case Kind::kTabulated:
      s << "tabulated";
      for (std::size_t k = 0; k < grid_eps_.size(); ++k) {
        s << ":" << hexfloat(grid_eps_[k]) << "," << hexfloat(grid_v_[k]);
      }
      s << ":" << hexfloat(shift_);
      break;
    case Kind::kPointMass:
      s << "point_mass";
      break;
  }
  return s.str();
}

nlohmann::json PotentialV::to_json() const {
  nlohmann::json j;
  switch (kind_) {
    case Kind::kGaussian:
      j = {{"kind", "gaussian"}, {"sigma", a_}};
      break;
    case Kind::kPower:
      j = {{"kind", "power"}, {"c", a_}, {"delta", b_}};
      break;
    case Kind::kTabulated: {
      std::vector<double> shifted = grid_v_;
      for (double& x : shifted) x += shift_;
      j = {{"kind", "tabulated"}, {"eps", grid_eps_}, {"v", shifted}};
      break;
    }
    case Kind::kPointMass:
      j = {{"kind", "point_mass"}};
      break;
  }
  j["envelope"] = {{"c", envelope_.c},
                   {"delta", envelope_.delta},
                   {"C", envelope_.C}};
  return j;
}

PotentialV PotentialV::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw ConfigError("potential spec needs a 'kind'");
  }
  const std::string kind = j.at("kind").get<std::string>();
  PotentialV v = [&] {
    if (kind == "gaussian") return gaussian(j.value("sigma", 1.0));
    if (kind == "power") return power(j.value("c", 1.0), j.value("delta", 1.0));
    if (kind == "tabulated") {
      return tabulated(j.at("eps").get<std::vector<double>>(),
                       j.at("v").get<std::vector<double>>(),
                       j.value("normalize", true));
    }
    if (kind == "point_mass") return point_mass();
    throw ConfigError("unknown potential kind '" + kind + "'");
  }();
  if (j.contains("envelope")) {
    const auto& e = j.at("envelope");
    v.envelope_ = {e.value("c", 0.0), e.value("delta", 0.0), e.value("C", 0.0)};
  }
  return v;
}

// ---------------------------------------------------------------------------
// DensityLambda

DensityLambda DensityLambda::uniform() {
  DensityLambda d;
  d.xs_ = {0.0, 1.0};
  d.vs_ = {1.0, 1.0};
  return d;
}

DensityLambda DensityLambda::piecewise_linear(std::vector<double> xs,
                                              std::vector<double> values) {
  if (xs.size() < 2 || xs.size() != values.size()) {
    throw DomainError("piecewise-linear density needs >= 2 matching nodes");
  }
  if (xs.front() != 0.0 || xs.back() != 1.0) {
    throw DomainError("piecewise-linear density nodes must span [0, 1]");
  }
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    if (!(xs[k + 1] > xs[k])) throw DomainError("density nodes must increase");
    mass += 0.5 * (values[k] + values[k + 1]) * (xs[k + 1] - xs[k]);
  }
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError("density must be strictly positive and finite");
    }
  }
  if (std::abs(mass - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << "density integrates to " << mass << ", not 1";
    throw DomainError(msg.str());
  }
  DensityLambda d;
  d.xs_ = std::move(xs);
  d.vs_ = std::move(values);
  d.min_ = *std::min_element(d.vs_.begin(), d.vs_.end());
  d.max_ = *std::max_element(d.vs_.begin(), d.vs_.end());
  return d;
}

DensityLambda DensityLambda::normalized_piecewise_linear(
    std::vector<double> xs, std::vector<double> values) {
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < xs.size() && k + 1 < values.size(); ++k) {
    mass += 0.5 * (values[k] + values[k + 1]) * (xs[k + 1] - xs[k]);
  }
  if (!(mass > 0.0)) throw DomainError("density has no mass");
  for (double& v : values) v /= mass;
  return piecewise_linear(std::move(xs), std::move(values));
}

double DensityLambda::operator()(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) {
    std::ostringstream msg;
    msg << "density evaluated at x = " << x << " outside [0, 1]";
    throw DomainError(msg.str());
  }
  if (xs_.size() == 2) return vs_[0] + x * (vs_[1] - vs_[0]);
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  std::size_t k = static_cast<std::size_t>(it - xs_.begin());
  k = std::clamp<std::size_t>(k, 1, xs_.size() - 1);
  const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
  return vs_[k - 1] + t * (vs_[k] - vs_[k - 1]);
}

std::vector<double> DensityLambda::kinks() const {
  return {xs_.begin() + 1, xs_.end() - 1};
}

double DensityLambda::sample(CounterRng& rng) const {
  for (;;) {
    const double x = rng.uniform();
    if (rng.uniform() * max_ <= (*this)(x)) return x;
  }
}

std::string DensityLambda::canonical() const {
  std::ostringstream s;
  s << "pl";
  for (std::size_t k = 0; k < xs_.size(); ++k) {
    s << ":" << hexfloat(xs_[k]) << "," << hexfloat(vs_[k]);
  }
  return s.str();
}

nlohmann::json DensityLambda::to_json() const {
  if (is_uniform()) return {{"kind", "uniform"}};
  return {{"kind", "piecewise_linear"}, {"x", xs_}, {"values", vs_}};
}

DensityLambda DensityLambda::from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", std::string("uniform"));
  if (kind == "uniform") return uniform();
  if (kind == "piecewise_linear") {
    auto xs = j.at("x").get<std::vector<double>>();
    auto vs = j.at("values").get<std::vector<double>>();
    if (j.value("normalize", false)) {
      return normalized_piecewise_linear(std::move(xs), std::move(vs));
    }
    return piecewise_linear(std::move(xs), std::move(vs));
  }
  throw ConfigError("unknown density kind '" + kind + "'");
}

void ModelParams::validate() const {
  if (n < 1) throw DomainError("n must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("p must lie in (0, 1)");
  if (!(quadrature_tol > 0.0)) throw DomainError("quadrature_tol must be > 0");
}

// ---------------------------------------------------------------------------
// Z_n, p_n, U_n

namespace {

class ModelCache {
 public:
  std::optional<double> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& key, double value) {
    std::unique_lock lock(mu_);
    if (values_.size() > 1'000'000) values_.clear();
    values_.emplace(key, value);
  }

  void clear() {
    std::unique_lock lock(mu_);
    values_.clear();
  }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, double> values_;
};

ModelCache& cache() {
  static ModelCache c;
  return c;
}

std::string model_key(const PotentialV& V, const DensityLambda& lam, int n,
                      double tol) {
  return V.canonical() + "|" + lam.canonical() + "|" + std::to_string(n) +
         "|" + hexfloat(tol);
}

// I(x) = int sqrt(Lambda(x + e/n)) q(e) de over the admissible e-range.
double inner_integral(const PotentialV& V, const DensityLambda& lam, int n,
                      double x, double tol) {
  const double nd = static_cast<double>(n);
  if (V.kind() == PotentialV::Kind::kPointMass) return std::sqrt(lam(x));
  const double r = V.support_radius();
  const double lo = std::max(-nd * x, -r);
  const double hi = std::min(nd * (1.0 - x), r);
  if (!(hi > lo)) return 0.0;
  std::vector<double> cuts = V.kinks();
  cuts.push_back(0.0);
  for (double node : lam.kinks()) cuts.push_back(nd * (node - x));
  const auto f = [&](double e) {
    const double y = std::clamp(x + e / nd, 0.0, 1.0);
    const double lq = V.log_density(e);
    return std::sqrt(lam(y)) * std::exp(lq);
  };
  return integrate_pieces(f, lo, hi, cuts, tol).value;
}

// n Z_n = int sqrt(Lambda(x)) I(x) dx.
double scaled_z(const PotentialV& V, const DensityLambda& lam, int n,
                double tol) {
  const double nd = static_cast<double>(n);
  if (V.kind() == PotentialV::Kind::kPointMass) return 1.0;
  const double r = V.support_radius();
  std::vector<double> cuts{r / nd, 1.0 - r / nd};
  for (double node : lam.kinks()) {
    cuts.push_back(node);
    cuts.push_back(node - r / nd);
    cuts.push_back(node + r / nd);
  }
  for (double e : V.kinks()) {
    cuts.push_back(-e / nd);
    cuts.push_back(1.0 - e / nd);
  }
  const auto f = [&](double x) {
    return std::sqrt(lam(x)) * inner_integral(V, lam, n, x, 0.1 * tol);
  };
  return integrate_pieces(f, 0.0, 1.0, cuts, tol).value;
}

}  // namespace

double z_n(const PotentialV& V, const DensityLambda& lam, int n, double tol) {
  if (n < 1) throw DomainError("n must be >= 1");
  const std::string key = "Z|" + model_key(V, lam, n, tol);
  if (auto hit = cache().find(key)) return *hit;
  const double value = scaled_z(V, lam, n, tol) / static_cast<double>(n);
  if (!(value > 0.0)) throw NumericError("Z_n quadrature returned a non-positive value");
  cache().insert(key, value);
  return value;
}

double p_n_marginal(const PotentialV& V, const DensityLambda& lam, int n,
                    double x, double tol) {
  if (!(x >= 0.0 && x <= 1.0)) {
    std::ostringstream msg;
    msg << "p_n evaluated at x = " << x << " outside [0, 1]";
    throw DomainError(msg.str());
  }
  const std::string key = "P|" + model_key(V, lam, n, tol) + "|" + hexfloat(x);
  if (auto hit = cache().find(key)) return *hit;
  const double nz = z_n(V, lam, n, tol) * static_cast<double>(n);
  const double value =
      std::sqrt(lam(x)) * inner_integral(V, lam, n, x, 0.1 * tol) / nz;
  cache().insert(key, value);
  return value;
}

double u_n(const PotentialV& V, const DensityLambda& lam, int n, double x,
           double tol) {
  return std::log(p_n_marginal(V, lam, n, x, tol) / std::sqrt(lam(x)));
}

void clear_model_cache() { cache().clear(); }

double symmetry_defect(const PotentialV& V, std::span<const double> grid) {
  double worst = 0.0;
  for (double e : grid) worst = std::max(worst, std::abs(V(e) - V(-e)));
  return worst;
}

bool lower_envelope_holds(const PotentialV& V, std::span<const double> grid) {
  const Envelope env = V.envelope();
  for (double e : grid) {
    const double lhs = V(e) - V.v_min();
    if (lhs + 1e-12 < env.c * std::pow(std::abs(e), 1.0 + env.delta)) {
      return false;
    }
  }
  return true;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace pmatch
