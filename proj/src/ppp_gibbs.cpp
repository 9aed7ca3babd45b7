#include "pmatch/ppp_gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pmatch/error.hpp"
#include "pmatch/parallel.hpp"

namespace pmatch {

void IndexedBijection::check() const {
  std::vector<std::int64_t> seen;
  for (const Label& l : y) {
    if (l) seen.push_back(*l);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw ContractViolation("bijection is not injective");
  }
}

IndexedBijection IndexedBijection::truth(const PPPConfiguration& cfg) {
  IndexedBijection b;
  b.x_lo = cfg.x_index(0);
  for (const Label& l : cfg.truth) {
    b.y.push_back(l ? Label{cfg.y_index(static_cast<std::size_t>(*l))} : Label{});
  }
  return b;
}

IndexedBijection IndexedBijection::shift(std::int64_t lo, std::int64_t hi,
                                         std::int64_t by) {
  if (hi < lo) throw DomainError("empty index range");
  IndexedBijection b;
  b.x_lo = lo;
  for (std::int64_t i = lo; i <= hi; ++i) b.y.emplace_back(i + by);
  return b;
}

Flow flow_of_bijection(const IndexedBijection& pi, std::int64_t a) {
  if (a < pi.x_lo || a > pi.x_hi()) throw DomainError("a outside the index window");
  Flow f;
  for (std::size_t k = 0; k < pi.y.size(); ++k) {
    if (!pi.y[k]) continue;
    const std::int64_t i = pi.x_lo + static_cast<std::int64_t>(k);
    const std::int64_t j = *pi.y[k];
    if (i <= a && j > a) ++f.L;
    if (i > a && j <= a) ++f.R;
  }
  f.F = f.L - f.R;
  return f;
}

std::pair<std::int64_t, std::int64_t> interior_indices(const PPPConfiguration& cfg) {
  const std::int64_t nx = static_cast<std::int64_t>(cfg.x_points.size());
  const std::int64_t ny = static_cast<std::int64_t>(cfg.y_points.size());
  const std::int64_t lo = std::max(cfg.x_index(0), cfg.y_index(0));
  const std::int64_t hi = std::min(cfg.x_index(nx - 1), cfg.y_index(ny - 1));
  return {lo, hi};
}

std::string u_convention_name(UConvention u) {
  return u == UConvention::kSqrt ? "sqrt" : "log_sqrt";
}

UConvention parse_u_convention(const std::string& s) {
  if (s == "log_sqrt") return UConvention::kLogSqrt;
  if (s == "sqrt") return UConvention::kSqrt;
  throw ConfigError("unknown u_convention '" + s + "' (expected log_sqrt or sqrt)");
}

QkMarginal qk_marginal_exact(const PPPConfiguration& cfg, const PotentialV& V, int K,
                             const QkOptions& opt) {
  if (cfg.kind != PPPKind::kExact) throw DomainError("configuration is not exact");
  if (K < 0) throw DomainError("K must be >= 0");
  QkMarginal out;
  out.K = K;
  out.F_star = flow_of_bijection(IndexedBijection::truth(cfg), 0).F;
  const int size = 2 * K + 1;
  std::vector<double> xs, ys;
  for (std::int64_t k = -K; k <= K; ++k) {
    const std::int64_t px = cfg.x_pos(k);
    const std::int64_t py = cfg.y_pos(k + out.F_star);
    if (px < 0 || py < 0) throw WindowTooSmall("index range exceeds the sampled window");
    const double x = cfg.x_points[px];
    const double y = cfg.y_points[py];
    if (std::abs(y) > cfg.K) throw WindowTooSmall("y index lies outside the complete region");
    xs.push_back(x);
    ys.push_back(y);
  }
  const LogMatrix a = pair_log_weights(xs, ys, V, 1.0);
  std::vector<double> row;
  if (size <= opt.permanent_cap) {
    row = permanent_row_marginals(a, K, opt.permanent_cap);
    out.engine = size <= 1 ? "enum" : "permanent";
  } else {
    BandedOptions b = opt.banded;
    b.bandwidth = std::min(b.bandwidth, size - 1);
    const MarginalMatrix m = BandedTransfer(a, b).marginals();
    for (int j = 0; j < size; ++j) row.push_back(m(K, j));
    out.engine = "banded";
  }
  for (int j = 0; j < size; ++j) {
    out.probs.labels.emplace_back(j - K + out.F_star);
    out.probs.probs.push_back(row[j]);
  }
  return out;
}

QkMarginal qk_marginal_partial(const PPPConfiguration& cfg, const PotentialV& V, int K,
                               UConvention u, const QkOptions& opt) {
  if (cfg.kind != PPPKind::kPartial) throw DomainError("configuration is not partial");
  if (K < 0) throw DomainError("K must be >= 0");
  if (K > cfg.K) throw WindowTooSmall("K exceeds the complete region of the sample");
  QkMarginal out;
  out.K = K;
  std::vector<double> xs, ys;
  std::vector<std::int64_t> ylab;
  int origin = -1;
  for (std::size_t k = 0; k < cfg.x_points.size(); ++k) {
    if (std::abs(cfg.x_points[k]) > K) continue;
    if (static_cast<std::int64_t>(k) == cfg.x_origin) origin = static_cast<int>(xs.size());
    xs.push_back(cfg.x_points[k]);
  }
  for (std::size_t k = 0; k < cfg.y_points.size(); ++k) {
    if (std::abs(cfg.y_points[k]) > K) continue;
    ys.push_back(cfg.y_points[k]);
    ylab.push_back(cfg.y_index(k));
  }
  if (origin < 0) throw ContractViolation("origin missing from the configuration");
  const double U = u == UConvention::kSqrt ? std::sqrt(cfg.rate) : 0.5 * std::log(cfg.rate);
  const std::size_t nx = xs.size(), ny = ys.size();
  const PartialPosteriorProblem prob(std::move(xs), std::move(ys), V, 1.0,
                                     std::vector<double>(nx, U), std::vector<double>(ny, U));
  PartialEngine used = PartialEngine::kAuto;
  const PartialMarginalTable t =
      marginals_partial(prob, PartialEngine::kAuto, opt.partial_caps, opt.sweep, &used);
  out.engine = engine_name(used);
  out.probs.labels.emplace_back();
  out.probs.probs.push_back(t.empty(origin));
  for (std::size_t b = 0; b < ny; ++b) {
    out.probs.labels.emplace_back(ylab[b]);
    out.probs.probs.push_back(t.at(origin, static_cast<int>(b)));
  }
  return out;
}

double sample_halfwidth(int K, double rate_min) {
  if (!(rate_min > 0.0)) throw DomainError("rate must be positive");
  return (K + 4.0 * std::sqrt(static_cast<double>(K)) + 5.0) / rate_min;
}

std::vector<CauchyRow> check_qk_cauchy(const CauchyConfig& cfg) {
  if (cfg.reps < 1) throw DomainError("reps must be >= 1");
  if (cfg.K_list.size() < 2) throw DomainError("K_list needs at least two values");
  if (!std::is_sorted(cfg.K_list.begin(), cfg.K_list.end()) ||
      std::adjacent_find(cfg.K_list.begin(), cfg.K_list.end()) != cfg.K_list.end()) {
    throw DomainError("K_list must be strictly ascending");
  }
  const int kmax = cfg.K_list.back();
  const std::size_t pairs = cfg.K_list.size() - 1;
  // tv[r][k] for consecutive pair k; empty when replicate r was skipped
  std::vector<std::vector<double>> tv(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(cfg.seed, r);
    try {
      std::vector<QkMarginal> q;
      if (cfg.p) {
        const PPPConfiguration c =
            sample_ppp_partial(cfg.lambda, *cfg.p, cfg.V, kmax, seed);
        for (int K : cfg.K_list) q.push_back(qk_marginal_partial(c, cfg.V, K, cfg.u, cfg.opt));
      } else {
        const PPPConfiguration c = sample_ppp_exact(
            cfg.lambda, cfg.V, sample_halfwidth(kmax, cfg.lambda.lambda_min()), seed);
        for (int K : cfg.K_list) q.push_back(qk_marginal_exact(c, cfg.V, K, cfg.opt));
      }
      std::vector<double> row;
      for (std::size_t k = 0; k < pairs; ++k) {
        row.push_back(tv_distance(q[k].probs, q[k + 1].probs));
      }
      tv[r] = std::move(row);
    } catch (const EngineCapError&) {
    } catch (const WindowTooSmall&) {
    }
  });
  std::vector<CauchyRow> out;
  for (std::size_t k = 0; k < pairs; ++k) {
    CauchyRow row;
    row.K = cfg.K_list[k];
    row.K2 = cfg.K_list[k + 1];
    double s = 0.0, s2 = 0.0;
    for (const auto& t : tv) {
      if (t.empty()) continue;
      ++row.reps;
      s += t[k];
      s2 += t[k] * t[k];
    }
    row.skip_rate = 1.0 - static_cast<double>(row.reps) / cfg.reps;
    if (row.reps > 0) {
      row.mean_tv = s / row.reps;
      if (row.reps > 1) {
        const double var = std::max(0.0, (s2 - s * s / row.reps) / (row.reps - 1));
        row.se = std::sqrt(var / row.reps);
      }
    }
    out.push_back(row);
  }
  return out;
}

std::string cauchy_csv(const std::vector<CauchyRow>& rows) {
  std::string out = "K,K',mean_tv,se,reps,skip_rate\n";
  char buf[160];
  for (const CauchyRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%d,%.17g\n", r.K, r.K2, r.mean_tv,
                  r.se, r.reps, r.skip_rate);
    out += buf;
  }
  return out;
}

}  // namespace pmatch
