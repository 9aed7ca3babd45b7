#include "pmatch/local.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "pmatch/error.hpp"

namespace pmatch {
namespace {

std::vector<int> sort_order(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  return idx;
}

EngineFlag flag_of(BlockResult::Engine e) {
  return e == BlockResult::Engine::kEnum ? EngineFlag::kEnum : EngineFlag::kPermanent;
}

EngineFlag flag_of(PartialEngine e) {
  switch (e) {
    case PartialEngine::kBruteforce:
      return EngineFlag::kEnum;
    case PartialEngine::kDp:
      return EngineFlag::kDp;
    default:
      return EngineFlag::kSweep;
  }
}

}  // namespace

SortMaps sort_maps(const std::vector<double>& X, const std::vector<double>& Y) {
  return {sort_order(X), sort_order(Y)};
}

std::string flag_name(EngineFlag f) {
  switch (f) {
    case EngineFlag::kEnum:
      return "enum";
    case EngineFlag::kPermanent:
      return "permanent";
    case EngineFlag::kDp:
      return "dp";
    case EngineFlag::kSweep:
      return "sweep";
    case EngineFlag::kFallback:
      return "fallback";
    case EngineFlag::kSkipped:
      return "skipped";
  }
  return "unknown";
}

std::pair<double, double> partial_window(double x, int n, int M) {
  if (M < 1) throw DomainError("M must be >= 1");
  const double cell = std::floor(n * x);
  return {std::max(0.0, (cell - M) / n), std::min(1.0, (cell + M) / n)};
}

std::vector<LocalRow> local_marginals_partial(const PartialPosteriorProblem& prob, int n,
                                              int M, const PartialLocalOptions& opt) {
  std::map<long, std::vector<int>> cells;
  for (int i = 0; i < prob.nx(); ++i) {
    cells[static_cast<long>(std::floor(n * prob.X()[i]))].push_back(i);
  }
  std::vector<LocalRow> rows(prob.nx());
  for (const auto& [cell, members] : cells) {
    const auto [lo, hi] = partial_window(prob.X()[members.front()], n, M);
    std::vector<int> xs, ys;
    for (int k = 0; k < prob.nx(); ++k) {
      if (prob.X()[k] >= lo && prob.X()[k] <= hi) xs.push_back(k);
    }
    for (int k = 0; k < prob.ny(); ++k) {
      if (prob.Y()[k] >= lo && prob.Y()[k] <= hi) ys.push_back(k);
    }
    const PartialPosteriorProblem local = prob.restrict(xs, ys);
    PartialMarginalTable t;
    PartialEngine used = PartialEngine::kAuto;
    bool skipped = false;
    try {
      used = pick_partial_engine(local.nx(), local.ny(), opt.caps, opt.allow_sweep);
      t = marginals_partial(local, used, opt.caps, opt.sweep);
    } catch (const EngineCapError&) {
      skipped = true;
    }
    for (int i : members) {
      LocalRow& r = rows[i];
      if (skipped) {
        r.flag = EngineFlag::kSkipped;
        continue;
      }
      const int c = static_cast<int>(std::find(xs.begin(), xs.end(), i) - xs.begin());
      r.flag = flag_of(used);
      r.dist.labels.emplace_back();
      r.dist.probs.push_back(t.empty(c));
      for (std::size_t b = 0; b < ys.size(); ++b) {
        r.dist.labels.emplace_back(ys[b]);
        r.dist.probs.push_back(t.at(c, static_cast<int>(b)));
      }
    }
  }
  return rows;
}

std::vector<LocalRow> local_marginals_exact(const ExactPosteriorProblem& prob, int M,
                                            const ExactCaps& caps) {
  if (M < 1) throw DomainError("M must be >= 1");
  const int n = prob.size();
  std::vector<LocalRow> rows(n);
  for (int r = 0; r < n; ++r) {
    const int lo = std::max(r - M, 0);
    const int hi = std::min(r + M, n - 1);
    std::vector<double> xs, ys;
    for (int k = lo; k <= hi; ++k) {
      xs.push_back(prob.X()[prob.s()[k]]);
      ys.push_back(prob.Y()[prob.t()[k]]);
    }
    LocalRow& row = rows[prob.s()[r]];
    try {
      const BlockResult b = block_center_marginal(xs, ys, r - lo, prob.V(), prob.scale(), caps);
      row.flag = flag_of(b.engine);
      for (int k = lo; k <= hi; ++k) {
        row.dist.labels.emplace_back(prob.t()[k]);
        row.dist.probs.push_back(b.probs[k - lo]);
      }
    } catch (const EngineCapError&) {
      row.flag = EngineFlag::kSkipped;
    }
  }
  return rows;
}

FlowStats flow_stats(const ExactInstance& inst, int i, double D) {
  const int n = inst.n();
  if (i < 0 || i >= n) throw DomainError("index out of range");
  if (!(D > 0.0)) throw DomainError("D must be positive");
  FlowStats f;
  f.i = i;
  f.D = D;
  const double xi = inst.X[i];
  const double ystar = inst.Y[inst.pi_star[i]];
  const double lo = xi - D / n;
  const double hi = xi + D / n;
  for (int j = 0; j < n; ++j) {
    const double xj = inst.X[j];
    const double yj = inst.Y[inst.pi_star[j]];
    if (xj <= xi && yj > ystar) ++f.L;
    if (xj > xi && yj <= ystar) ++f.R;
    if (xj >= lo && xj <= xi && yj > ystar && yj <= hi) ++f.LD;
    if (xj > xi && xj <= hi && yj >= lo && yj <= ystar) ++f.RD;
  }
  f.F = f.L - f.R;
  f.FD = f.LD - f.RD;
  return f;
}

double default_flow_radius(int M, double lambda_min) {
  return 3.0 * M / (2.0 * lambda_min) + M + 1.0;
}

std::vector<LocalRow> tilde_marginals_exact(const ExactInstance& inst, int M, double D,
                                            const ExactCaps& caps) {
  if (M < 1) throw DomainError("M must be >= 1");
  const ExactPosteriorProblem prob(inst);
  const int n = prob.size();
  std::vector<LocalRow> rows(n);
  for (int i = 0; i < n; ++i) {
    LocalRow& row = rows[i];
    const int jstar = inst.pi_star[i];
    const FlowStats f = flow_stats(inst, i, D);
    const int rx = prob.s_inv()[i];
    const int ry = prob.t_inv()[jstar];
    const int xl = rx - M, xr = rx + M;
    const int yl = ry - M + f.FD, yr = ry + M + f.FD;
    bool ok = xl >= 0 && xr < n && yl >= 0 && yr < n;
    std::vector<double> xs, ys;
    if (ok) {
      const double lo = inst.X[i] - D / n;
      const double hi = inst.X[i] + D / n;
      for (int k = xl; k <= xr; ++k) xs.push_back(prob.X()[prob.s()[k]]);
      for (int k = yl; k <= yr; ++k) ys.push_back(prob.Y()[prob.t()[k]]);
      for (double v : xs) ok = ok && v >= lo && v <= hi;
      for (double v : ys) ok = ok && v >= lo && v <= hi;
    }
    if (!ok) {
      row.dist = MatchDistribution::point_mass(Label{jstar});
      row.flag = EngineFlag::kFallback;
      continue;
    }
    try {
      const BlockResult b = block_center_marginal(xs, ys, M, prob.V(), prob.scale(), caps);
      row.flag = flag_of(b.engine);
      for (int k = yl; k <= yr; ++k) {
        row.dist.labels.emplace_back(prob.t()[k]);
        row.dist.probs.push_back(b.probs[k - yl]);
      }
    } catch (const EngineCapError&) {
      row.flag = EngineFlag::kSkipped;
    }
  }
  return rows;
}

std::string local_rows_csv(const std::vector<LocalRow>& rows) {
  std::string out = "i,j,prob,engine_flag\n";
  char buf[128];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string flag = flag_name(rows[i].flag);
    if (rows[i].flag == EngineFlag::kSkipped) {
      std::snprintf(buf, sizeof(buf), "%zu,,,%s\n", i, flag.c_str());
      out += buf;
      continue;
    }
    const MatchDistribution& d = rows[i].dist;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (d.probs[k] <= 1e-15) continue;
      std::snprintf(buf, sizeof(buf), "%zu,%lld,%.17g,%s\n", i,
                    static_cast<long long>(encode_label(d.labels[k])), d.probs[k],
                    flag.c_str());
      out += buf;
    }
  }
  return out;
}

}  // namespace pmatch
