#include "pmatch/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "pmatch/error.hpp"

namespace pmatch {
namespace {

// Stream reserved for the extra y-noise process of the partial limit.
constexpr std::uint64_t kNoiseStream = std::uint64_t{1} << 40;
constexpr double kMarginTail = 1e-9;

template <class T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t m = v.size(); m > 1; --m) {
    std::swap(v[m - 1], v[rng.below(m)]);
  }
}

long poisson(double mean, CounterRng& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw SamplingError("bad Poisson mean");
  }
  if (mean == 0.0) return 0;
  std::poisson_distribution<long> d(mean);
  return d(rng);
}

const char* mark_name(Mark m) {
  switch (m) {
    case Mark::kXY:
      return "S_XY";
    case Mark::kX:
      return "S_X";
    case Mark::kY:
      return "S_Y";
    case Mark::kNone:
      return "S_none";
  }
  return "";
}

void write_json(std::ostringstream& out, const nlohmann::json& j, int indent,
                int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string pad_end(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad << nlohmann::json(it.key()).dump() << ": ";
        write_json(out, it.value(), indent, depth + 1);
      }
      out << "\n" << pad_end << "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      // Numeric arrays stay on one line.
      out << "[";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out << ", ";
        first = false;
        write_json(out, v, indent, depth + 1);
      }
      out << "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out << "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      std::string s = buf;
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      out << s;
      return;
    }
    default:
      out << j.dump();
  }
}

}  // namespace

nlohmann::json ModelSpec::to_json() const {
  return {{"V", V.to_json()},
          {"lambda", lambda.to_json()},
          {"n", n},
          {"p", p},
          {"quadrature_tol", quadrature_tol}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec m;
  if (j.contains("V")) m.V = PotentialV::from_json(j.at("V"));
  if (j.contains("lambda")) m.lambda = DensityLambda::from_json(j.at("lambda"));
  m.n = j.value("n", 1);
  m.p = j.value("p", 0.5);
  m.quadrature_tol = j.value("quadrature_tol", 1e-8);
  return m;
}

void ExactInstance::validate() const {
  const std::size_t n = X.size();
  if (Y.size() != n || pi_star.size() != n) {
    throw ContractViolation("exact instance: X, Y, pi_star lengths differ");
  }
  std::vector<char> seen(n, 0);
  for (int j : pi_star) {
    if (j < 0 || static_cast<std::size_t>(j) >= n || seen[j]) {
      throw ContractViolation("exact instance: pi_star is not a bijection");
    }
    seen[j] = 1;
  }
}

void PartialInstance::validate() const {
  if (static_cast<int>(marks.size()) != N) {
    throw ContractViolation("partial instance: marks length differs from N");
  }
  int nxy = 0, nx_only = 0, ny_only = 0;
  for (Mark m : marks) {
    nxy += m == Mark::kXY;
    nx_only += m == Mark::kX;
    ny_only += m == Mark::kY;
  }
  if (nx() != nxy + nx_only || ny() != nxy + ny_only) {
    throw ContractViolation("partial instance: N_X or N_Y inconsistent with marks");
  }
  if (pi_star.size() != X.size()) {
    throw ContractViolation("partial instance: pi_star length differs from N_X");
  }
  std::vector<char> seen(Y.size(), 0);
  int matched = 0;
  for (const Label& l : pi_star) {
    if (!l) continue;
    if (*l < 0 || *l >= ny() || seen[*l]) {
      throw ContractViolation("partial instance: pi_star not injective");
    }
    seen[*l] = 1;
    ++matched;
  }
  if (matched != nxy) {
    throw ContractViolation("partial instance: |dom(pi_star)| != |S_XY|");
  }
}

std::pair<double, double> sample_pair(const PotentialV& V,
                                      const DensityLambda& lam, int n,
                                      CounterRng& rng, long max_attempts) {
  const double lmax = lam.lambda_max();
  const double nd = static_cast<double>(n);
  for (long attempt = 0; attempt < max_attempts; ++attempt) {
    const double x = rng.uniform();
    const double y = x + V.sample(rng) / nd;
    if (y < 0.0 || y > 1.0) {
      continue;
    }
    const double accept = std::sqrt(lam(x) * lam(y)) / lmax;
    if (rng.uniform() < accept) return {x, y};
  }
  std::ostringstream msg;
  msg << "rejection sampler exceeded " << max_attempts << " attempts";
  throw SamplingError(msg.str());
}

ExactInstance sample_exact_instance(const ModelSpec& model, std::uint64_t seed,
                                    const SamplerOptions& opt) {
  if (model.n < 1) throw DomainError("n must be >= 1");
  const int n = model.n;
  std::vector<double> xbar(n), ybar(n);
  for (int k = 0; k < n; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k) + 1);
    std::tie(xbar[k], ybar[k]) =
        sample_pair(model.V, model.lambda, n, rng, opt.max_attempts);
  }
  ExactInstance inst;
  inst.model = model;
  inst.seed = seed;
  inst.pi_star.resize(n);
  std::iota(inst.pi_star.begin(), inst.pi_star.end(), 0);
  CounterRng global(seed, 0);
  shuffle(inst.pi_star, global);
  inst.X.resize(n);
  inst.Y = ybar;
  for (int i = 0; i < n; ++i) inst.X[i] = xbar[inst.pi_star[i]];
  return inst;
}

PartialInstance sample_partial_instance(const ModelSpec& model,
                                        std::uint64_t seed,
                                        const SamplerOptions& opt) {
  ModelParams{model.n, model.p, model.quadrature_tol}.validate();
  const double z = z_n(model.V, model.lambda, model.n, model.quadrature_tol);
  const double mean = 1.0 / ((1.0 - model.p) * (1.0 - model.p) * z);
  CounterRng global(seed, 0);
  PartialInstance inst;
  inst.model = model;
  inst.seed = seed;
  inst.N = static_cast<int>(poisson(mean, global));
  inst.marks.resize(inst.N);
  std::vector<double> xbar(inst.N), ybar(inst.N);
  std::vector<int> xs, ys;
  for (int k = 0; k < inst.N; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k) + 1);
    const bool ox = rng.uniform() < model.p;
    const bool oy = rng.uniform() < model.p;
    inst.marks[k] = ox ? (oy ? Mark::kXY : Mark::kX) : (oy ? Mark::kY : Mark::kNone);
    if (ox || oy) {
      std::tie(xbar[k], ybar[k]) =
          sample_pair(model.V, model.lambda, model.n, rng, opt.max_attempts);
    }
    if (ox) xs.push_back(k);
    if (oy) ys.push_back(k);
  }
  shuffle(xs, global);
  shuffle(ys, global);
  inst.pi_x = xs;
  inst.pi_y = ys;
  std::vector<int> y_of_pair(inst.N, -1);
  for (std::size_t j = 0; j < ys.size(); ++j) y_of_pair[ys[j]] = static_cast<int>(j);
  for (int k : xs) inst.X.push_back(xbar[k]);
  for (int k : ys) inst.Y.push_back(ybar[k]);
  for (int k : xs) {
    inst.pi_star.push_back(inst.marks[k] == Mark::kXY ? Label{y_of_pair[k]}
                                                      : Label{});
  }
  return inst;
}

std::int64_t PPPConfiguration::x_pos(std::int64_t index) const {
  const std::int64_t pos = index + x_origin;
  return pos >= 0 && pos < static_cast<std::int64_t>(x_points.size()) ? pos : -1;
}

std::int64_t PPPConfiguration::y_pos(std::int64_t index) const {
  const std::int64_t pos = index + y_origin;
  return pos >= 0 && pos < static_cast<std::int64_t>(y_points.size()) ? pos : -1;
}

namespace {

struct RawPoint {
  double x;
  bool origin;
  Label partner_raw;  // index into raw y list
};

// Sort x and y lists and translate the truth into sorted positions.
void finalize(PPPConfiguration& cfg, std::vector<RawPoint>& xs,
              std::vector<double>& ys) {
  std::vector<std::size_t> yorder(ys.size());
  std::iota(yorder.begin(), yorder.end(), 0);
  std::stable_sort(yorder.begin(), yorder.end(),
                   [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });
  std::vector<std::int64_t> yrank(ys.size());
  for (std::size_t r = 0; r < yorder.size(); ++r) {
    yrank[yorder[r]] = static_cast<std::int64_t>(r);
    cfg.y_points.push_back(ys[yorder[r]]);
  }
  std::stable_sort(xs.begin(), xs.end(),
                   [](const RawPoint& a, const RawPoint& b) { return a.x < b.x; });
  for (std::size_t k = 0; k < xs.size(); ++k) {
    cfg.x_points.push_back(xs[k].x);
    if (xs[k].origin) cfg.x_origin = static_cast<std::int64_t>(k);
    cfg.truth.push_back(xs[k].partner_raw ? Label{yrank[*xs[k].partner_raw]}
                                          : Label{});
  }
}

double margin(const PotentialV& V) {
  return V.kind() == PotentialV::Kind::kPointMass ? 0.0
                                                  : V.quantile_radius(kMarginTail);
}

}  // namespace

PPPConfiguration sample_ppp_exact(const DensityLambda& lam, const PotentialV& V,
                                  double K, std::uint64_t seed) {
  if (!(K > 0.0)) throw DomainError("window halfwidth K must be > 0");
  PPPConfiguration cfg;
  cfg.kind = PPPKind::kExact;
  cfg.K = K;
  cfg.seed = seed;
  cfg.halfwidth = K + margin(V);
  CounterRng global(seed, 0);
  cfg.x_anchor = lam.sample(global);
  cfg.rate = lam(cfg.x_anchor);
  const long count = poisson(cfg.rate * 2.0 * cfg.halfwidth, global);
  std::vector<RawPoint> xs{{0.0, true, {}}};
  for (long k = 0; k < count; ++k) {
    xs.push_back({(2.0 * global.uniform() - 1.0) * cfg.halfwidth, false, {}});
  }
  std::vector<double> ys;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    CounterRng rng(seed, k + 1);
    xs[k].partner_raw = static_cast<std::int64_t>(ys.size());
    ys.push_back(xs[k].x + V.sample(rng));
  }
  finalize(cfg, xs, ys);
  cfg.y_origin = *cfg.truth[cfg.x_origin];
  return cfg;
}

PPPConfiguration sample_ppp_partial(const DensityLambda& lam, double p,
                                    const PotentialV& V, double K,
                                    std::uint64_t seed) {
  if (!(K > 0.0)) throw DomainError("window halfwidth K must be > 0");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("p must lie in (0, 1)");
  PPPConfiguration cfg;
  cfg.kind = PPPKind::kPartial;
  cfg.K = K;
  cfg.p = p;
  cfg.seed = seed;
  cfg.halfwidth = K + margin(V);
  CounterRng global(seed, 0);
  cfg.x_anchor = lam.sample(global);
  cfg.rate = lam(cfg.x_anchor);
  const double q1 = 1.0 - p;
  const long count = poisson(cfg.rate * p / (q1 * q1) * 2.0 * cfg.halfwidth, global);
  std::vector<RawPoint> xs{{0.0, true, {}}};
  for (long k = 0; k < count; ++k) {
    xs.push_back({(2.0 * global.uniform() - 1.0) * cfg.halfwidth, false, {}});
  }
  std::vector<double> ys;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    CounterRng rng(seed, k + 1);
    if (rng.uniform() < p) {
      xs[k].partner_raw = static_cast<std::int64_t>(ys.size());
      ys.push_back(xs[k].x + V.sample(rng));
    }
  }
  CounterRng noise(seed, kNoiseStream);
  const long extra = poisson(cfg.rate * p / q1 * 2.0 * cfg.halfwidth, noise);
  for (long k = 0; k < extra; ++k) {
    ys.push_back((2.0 * noise.uniform() - 1.0) * cfg.halfwidth);
  }
  finalize(cfg, xs, ys);
  cfg.y_origin = static_cast<std::int64_t>(
      std::lower_bound(cfg.y_points.begin(), cfg.y_points.end(), 0.0) -
      cfg.y_points.begin());
  return cfg;
}

nlohmann::json to_json(const ExactInstance& inst) {
  return {{"schema_version", kInstanceSchemaVersion},
          {"kind", "exact"},
          {"params", inst.model.to_json()},
          {"seed", inst.seed},
          {"X", inst.X},
          {"Y", inst.Y},
          {"pi_star", inst.pi_star},
          {"marks", nlohmann::json::object()}};
}

nlohmann::json to_json(const PartialInstance& inst) {
  nlohmann::json marks = {{"S_XY", nlohmann::json::array()},
                          {"S_X", nlohmann::json::array()},
                          {"S_Y", nlohmann::json::array()},
                          {"S_none", nlohmann::json::array()}};
  for (int k = 0; k < inst.N; ++k) marks[mark_name(inst.marks[k])].push_back(k);
  std::vector<std::int64_t> pi;
  for (const Label& l : inst.pi_star) pi.push_back(encode_label(l));
  return {{"schema_version", kInstanceSchemaVersion},
          {"kind", "partial"},
          {"params", inst.model.to_json()},
          {"seed", inst.seed},
          {"N", inst.N},
          {"N_X", inst.nx()},
          {"N_Y", inst.ny()},
          {"X", inst.X},
          {"Y", inst.Y},
          {"pi_star", pi},
          {"pi_x", inst.pi_x},
          {"pi_y", inst.pi_y},
          {"marks", marks}};
}

nlohmann::json to_json(const PPPConfiguration& cfg) {
  std::vector<std::int64_t> truth;
  for (const Label& l : cfg.truth) truth.push_back(encode_label(l));
  return {{"schema_version", kInstanceSchemaVersion},
          {"kind", cfg.kind == PPPKind::kExact ? "ppp_exact" : "ppp_partial"},
          {"K", cfg.K},
          {"halfwidth", cfg.halfwidth},
          {"x_anchor", cfg.x_anchor},
          {"rate", cfg.rate},
          {"p", cfg.p},
          {"seed", cfg.seed},
          {"x_points", cfg.x_points},
          {"y_points", cfg.y_points},
          {"x_origin", cfg.x_origin},
          {"y_origin", cfg.y_origin},
          {"truth", truth}};
}

namespace {

void check_schema(const nlohmann::json& j, const char* kind) {
  if (j.value("schema_version", 0) != kInstanceSchemaVersion) {
    throw ConfigError("unsupported instance schema_version");
  }
  if (j.value("kind", std::string()) != kind) {
    throw ConfigError(std::string("expected an instance of kind '") + kind + "'");
  }
}

}  // namespace

ExactInstance exact_instance_from_json(const nlohmann::json& j) {
  try {
    check_schema(j, "exact");
    ExactInstance inst;
    inst.model = ModelSpec::from_json(j.at("params"));
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.X = j.at("X").get<std::vector<double>>();
    inst.Y = j.at("Y").get<std::vector<double>>();
    inst.pi_star = j.at("pi_star").get<std::vector<int>>();
    inst.model.n = static_cast<int>(inst.X.size());
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed exact instance: ") + e.what());
  }
}

PartialInstance partial_instance_from_json(const nlohmann::json& j) {
  try {
    check_schema(j, "partial");
    PartialInstance inst;
    inst.model = ModelSpec::from_json(j.at("params"));
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.N = j.at("N").get<int>();
    inst.X = j.at("X").get<std::vector<double>>();
    inst.Y = j.at("Y").get<std::vector<double>>();
    for (auto v : j.at("pi_star").get<std::vector<std::int64_t>>()) {
      inst.pi_star.push_back(decode_label(v));
    }
    inst.pi_x = j.value("pi_x", std::vector<int>{});
    inst.pi_y = j.value("pi_y", std::vector<int>{});
    inst.marks.assign(inst.N, Mark::kNone);
    const auto& marks = j.at("marks");
    for (Mark m : {Mark::kXY, Mark::kX, Mark::kY, Mark::kNone}) {
      for (int k : marks.at(mark_name(m)).get<std::vector<int>>()) {
        if (k < 0 || k >= inst.N) throw ConfigError("mark index out of range");
        inst.marks[k] = m;
      }
    }
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed partial instance: ") + e.what());
  }
}

std::string dump_json(const nlohmann::json& j) {
  std::ostringstream out;
  write_json(out, j, 2, 0);
  out << "\n";
  return out.str();
}

}  // namespace pmatch
