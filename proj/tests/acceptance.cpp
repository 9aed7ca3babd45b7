// Acceptance checks: one PASS/FAIL line per criterion.
//   pmatch_acceptance            run all
//   pmatch_acceptance --only N   run criterion N

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmatch/cli.hpp"
#include "pmatch/csv.hpp"
#include "pmatch/diagnostics.hpp"
#include "pmatch/error.hpp"
#include "pmatch/experiments.hpp"
#include "pmatch/local.hpp"
#include "pmatch/model.hpp"
#include "pmatch/parallel.hpp"
#include "pmatch/ppp_gibbs.hpp"

namespace fs = std::filesystem;
using namespace pmatch;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelSpec gauss(int n, double p = 0.5) {
  return ModelSpec{PotentialV::gaussian(1.0), DensityLambda::uniform(), n, p, 1e-8};
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

std::vector<int> ranks(const std::vector<double>& v) {
  const std::vector<int> s = sort_maps(v, v).s;
  std::vector<int> r(v.size());
  for (std::size_t k = 0; k < s.size(); ++k) r[s[k]] = static_cast<int>(k);
  return r;
}

Outcome ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 25; ++s) {
    const ExactPosteriorProblem prob(sample_exact_instance(gauss(7), 1000 + s));
    const MarginalMatrix bf = marginals_bruteforce_exact(prob);
    const MarginalMatrix pm = marginals_permanent_exact(prob);
    const MarginalMatrix bd = marginals_banded_exact(prob, BandedOptions{6, INFINITY, 4'000'000});
    worst = std::max({worst, max_abs(bf.p, pm.p), max_abs(bf.p, bd.p)});
  }
  const double t = elapsed(t0);
  return {worst <= 1e-10 && t < 60.0,
          fmt("max entry diff %.3g (tol 1e-10), %.1f s (limit 60)", worst, t)};
}

Outcome ac2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int found = 0;
  for (std::uint64_t s = 0; found < 25; ++s) {
    const PartialInstance inst = sample_partial_instance(gauss(2), 2000 + s);
    if (inst.nx() > 5 || inst.ny() > 5) continue;
    ++found;
    const PartialPosteriorProblem prob(inst);
    worst = std::max(worst, max_abs(marginals_bruteforce_partial(prob).p,
                                    marginals_dp_partial(prob).p));
  }
  const double t = elapsed(t0);
  return {worst <= 1e-10 && t < 30.0,
          fmt("max entry diff %.3g over 25 instances (tol 1e-10), %.1f s (limit 30)", worst, t)};
}

std::uint64_t enumerate_count(int a, int b) {
  std::vector<char> used(b, 0);
  std::function<std::uint64_t(int)> rec = [&](int i) -> std::uint64_t {
    if (i == a) return 1;
    std::uint64_t c = rec(i + 1);
    for (int j = 0; j < b; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      c += rec(i + 1);
      used[j] = 0;
    }
    return c;
  };
  return rec(0);
}

Outcome ac3() {
  const auto t0 = std::chrono::steady_clock::now();
  int bad = 0;
  for (int a = 0; a <= 6; ++a) {
    for (int b = 0; b <= 6; ++b) bad += count_partial_bijections(a, b) != enumerate_count(a, b);
  }
  const double t = elapsed(t0);
  return {bad == 0 && count_partial_bijections(2, 2) == 7 && t < 1.0,
          fmt("%g mismatches over a,b <= 6, (2,2) -> %g, %.3f s (limit 1)", bad,
              static_cast<double>(count_partial_bijections(2, 2)), t)};
}

Outcome ac4() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ExactPosteriorProblem prob(sample_exact_instance(gauss(7), 4000 + s));
    const MarginalMatrix full = marginals_bruteforce_exact(prob);
    const std::vector<LocalRow> rows = local_marginals_exact(prob, 7);
    for (int i = 0; i < 7; ++i) worst = std::max(worst, tv_distance(rows[i].dist, full.row(i)));
  }
  return {worst <= 1e-12, fmt("max TV %.3g (tol 1e-12)", worst)};
}

Outcome tv_trend(const ExperimentConfig& cfg, double limit_s, double abs_cap, int id) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TvRow> rows;
  try {
    rows = tv_experiment(cfg);
  } catch (const Error& e) {
    return {false, std::string("experiment failed: ") + e.what()};
  }
  const double t = elapsed(t0);
  const TvRow& lo = rows.front();
  const TvRow& hi = rows.back();
  const double se = std::hypot(lo.se, hi.se);
  bool pass = lo.mean_tv - hi.mean_tv > 2.0 * se && t < limit_s && lo.reps == cfg.reps &&
              hi.reps == cfg.reps;
  if (abs_cap > 0.0) pass = pass && hi.mean_tv < abs_cap;
  std::string d = fmt("mean TV M=%g: %.4g, ", lo.M, lo.mean_tv) +
                  fmt("M=%g: %.4g, drop %.3g vs 2 SE %.3g, ", hi.M, hi.mean_tv,
                      lo.mean_tv - hi.mean_tv, 2.0 * se) +
                  fmt("skip %.3g/%.3g, %.0f s", lo.skip_rate, hi.skip_rate, t) +
                  fmt(" (limit %.0f)", limit_s);
  if (abs_cap > 0.0) d += fmt(", cap %.3g", abs_cap);
  (void)id;
  return {pass, d};
}

Outcome ac5() {
  ExperimentConfig cfg;
  cfg.kind = ModelKind::kExact;
  cfg.n_list = {100};
  cfg.M_list = {1, 8};
  cfg.reps = 20;
  cfg.seed = 5;
  cfg.engine = "banded";
  cfg.banded.bandwidth = 20;
  cfg.band_check = true;  // B = 25 must agree within 1e-6
  return tv_trend(cfg, 600.0, 0.05, 5);
}

Outcome ac6() {
  ExperimentConfig cfg;
  cfg.kind = ModelKind::kPartial;
  cfg.n_list = {40};
  cfg.p = 0.5;
  cfg.M_list = {2, 16};
  cfg.reps = 50;
  cfg.seed = 6;
  cfg.engine = "auto";
  return tv_trend(cfg, 600.0, 0.0, 6);
}

Outcome ac7() {
  int failures = 0, checked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ExactInstance inst = sample_exact_instance(gauss(50), 7000 + s);
    const std::vector<int> rx = ranks(inst.X), ry = ranks(inst.Y);
    for (int i = 0; i < 50; ++i) {
      ++checked;
      failures += flow_stats(inst, i, 4.0).F != rx[i] - ry[inst.pi_star[i]];
    }
  }
  int ppp_fail = 0, sites = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PPPConfiguration c =
        sample_ppp_exact(DensityLambda::uniform(), PotentialV::gaussian(1.0), 10.0, 7000 + s);
    const IndexedBijection t = IndexedBijection::truth(c);
    const auto [lo, hi] = interior_indices(c);
    const std::int64_t f0 = flow_of_bijection(t, lo).F;
    for (std::int64_t a = lo; a <= hi; ++a) {
      ++sites;
      ppp_fail += flow_of_bijection(t, a).F != f0;
    }
  }
  return {failures == 0 && ppp_fail == 0,
          fmt("rank identity failures %g/%g, PPP flow failures %g/%g", failures, checked,
              ppp_fail, sites)};
}

Outcome ac8() {
  const int n = 60, M = 3;
  const double D = default_flow_radius(M, 1.0);
  int interior = 0, event = 0, equal = 0, flagged_rest = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ExactInstance inst = sample_exact_instance(gauss(n), 8000 + s);
    const ExactPosteriorProblem prob(inst);
    const std::vector<LocalRow> hat = local_marginals_exact(prob, M);
    const std::vector<LocalRow> tilde = tilde_marginals_exact(inst, M, D);
    for (int i = 0; i < n; ++i) {
      const int r = prob.s_inv()[i];
      if (r < M || r >= n - M) continue;
      ++interior;
      const FlowStats f = flow_stats(inst, i, D);
      const bool holds = f.FD == f.F && tilde[i].flag != EngineFlag::kFallback;
      if (holds) {
        ++event;
        const MatchDistribution& a = tilde[i].dist;
        const MatchDistribution& b = hat[i].dist;
        equal += a.labels == b.labels && a.probs == b.probs;
      } else {
        flagged_rest += tilde[i].flag == EngineFlag::kFallback;
      }
    }
  }
  const double frac = static_cast<double>(event) / interior;
  const bool pass = frac >= 0.95 && equal == event && flagged_rest == interior - event;
  return {pass, fmt("event on %.4f of %g interior rows (need 0.95), bitwise equal %g/", frac,
                    interior, equal) +
                    fmt("%g, fallback on %g/%g of the rest", event, flagged_rest,
                        interior - event)};
}

Outcome ac9() {
  const auto t0 = std::chrono::steady_clock::now();
  const PotentialV V = PotentialV::gaussian(1.0);
  const DensityLambda lam = DensityLambda::uniform();
  const double nz = 1000.0 * z_n(V, lam, 1000);
  double sup = 0.0;
  for (int k = 0; k <= 800; ++k) {
    const double x = 0.1 + 0.8 * k / 800.0;
    sup = std::max(sup, std::abs(p_n_marginal(V, lam, 1000, x) - 1.0));
  }
  const double t = elapsed(t0);
  return {std::abs(nz - 1.0) <= 0.02 && sup <= 0.02 && t < 60.0,
          fmt("|n Z_n - 1| = %.3g, sup |p_n - 1| = %.3g (tol 0.02), %.1f s (limit 60)",
              std::abs(nz - 1.0), sup, t)};
}

Outcome ac10() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::string name;
    std::optional<double> p;
    UConvention u;
  };
  const std::vector<Case> cases = {{"exact", std::nullopt, UConvention::kLogSqrt},
                                   {"partial/log_sqrt", 0.5, UConvention::kLogSqrt},
                                   {"partial/sqrt", 0.5, UConvention::kSqrt}};
  bool pass = true;
  std::string detail;
  for (const Case& c : cases) {
    CauchyConfig cfg;
    cfg.p = c.p;
    cfg.u = c.u;
    cfg.K_list = {4, 8, 12, 16};
    cfg.reps = 100;
    cfg.seed = 10;
    cfg.threads = default_threads();
    const std::vector<CauchyRow> rows = check_qk_cauchy(cfg);
    detail += c.name + ":";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      detail += fmt(" %.3g(se %.2g)", rows[k].mean_tv, rows[k].se);
      if (rows[k].skip_rate > 0.0) detail += fmt("(skip %.2f)", rows[k].skip_rate);
      if (k + 1 < rows.size()) {
        const double se = std::hypot(rows[k].se, rows[k + 1].se);
        pass = pass && rows[k].mean_tv - rows[k + 1].mean_tv > 2.0 * se;
      }
    }
    detail += "; ";
  }
  const double t = elapsed(t0);
  pass = pass && t < 900.0;
  return {pass, detail + fmt("each drop > 2 SE, %.0f s (limit 900)", t)};
}

Outcome ac11() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.kind = ModelKind::kPartial;
  std::vector<double> cover, truth_p, self_p;
  for (int r = 0; r < 200; ++r) {
    const PartialInstance inst = sample_partial_instance(gauss(8), instance_seed(11, 8, r));
    if (inst.nx() == 0) continue;
    const PartialPosteriorProblem prob(inst);
    const GroundTruth g = partial_ground_truth(prob, cfg);
    double c = 0.0, tp = 0.0, sp = 0.0;
    for (int i = 0; i < inst.nx(); ++i) {
      c += expected_coverage(g.rows[i], inst.pi_star[i], 0.1);
      tp += cost_true_match(g.rows[i], inst.pi_star[i]);
      for (double q : g.rows[i].probs) sp += q * q;
    }
    cover.push_back(c / inst.nx());
    truth_p.push_back(tp / inst.nx());
    self_p.push_back(sp / inst.nx());
  }
  const double N = static_cast<double>(cover.size());
  double mc = 0.0, md = 0.0, md2 = 0.0, mt = 0.0, ms = 0.0;
  for (std::size_t k = 0; k < cover.size(); ++k) {
    mc += cover[k] / N;
    mt += truth_p[k] / N;
    ms += self_p[k] / N;
    const double d = truth_p[k] - self_p[k];
    md += d / N;
    md2 += d * d / N;
  }
  const double se = std::sqrt((md2 - md * md) / (N - 1));
  const double t = elapsed(t0);
  const bool pass = mc >= 0.87 && mc <= 0.93 && std::abs(md) <= 2.0 * se && t < 600.0;
  return {pass, fmt("coverage %.4f (need [0.87, 0.93]); true-match %.4f vs self-assigned %.4f",
                    mc, mt, ms) +
                    fmt(" diff %.3g (2 SE %.3g), %.0f s (limit 600)", md, 2.0 * se, t)};
}

Outcome ac12() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExactPosteriorProblem ex(sample_exact_instance(gauss(5), 12));
  const MarginalMatrix bf = marginals_bruteforce_exact(ex);
  const MarginalMatrix ch = mcmc_marginals_exact(ex, 2'000'000, 12);
  double tv = 0.0;
  for (int i = 0; i < 5; ++i) tv = std::max(tv, tv_distance(bf.row(i), ch.row(i)));

  PartialInstance pi;
  for (std::uint64_t s = 0;; ++s) {
    pi = sample_partial_instance(gauss(3), 1200 + s);
    if (pi.nx() == 4 && pi.ny() == 4) break;
  }
  const PartialPosteriorProblem pp(pi);
  const PartialMarginalTable dp = marginals_dp_partial(pp);
  const PartialMarginalTable pc = mcmc_marginals_partial(pp, 2'000'000, 12);
  const double diff = max_abs(dp.p, pc.p);
  const double t = elapsed(t0);
  return {tv <= 0.02 && diff <= 0.02 && t < 300.0,
          fmt("exact chain max row TV %.3g, partial chain max entry diff %.3g (tol 0.02), "
              "%.0f s (limit 300)",
              tv, diff, t)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name == "config.json") continue;
    const std::string text = read_text(e.path().string());
    m[name] = e.path().extension() == ".csv" ? csv_body(text) : text;
  }
  return m;
}

Outcome ac13() {
  const fs::path root = fs::temp_directory_path() / "pmatch_acceptance_13";
  fs::remove_all(root);
  struct Cmd {
    std::string name;
    nlohmann::json cfg;
    bool instance = false;
  };
  const nlohmann::json common = {{"n", {10}}, {"M", {1, 3}}, {"K", {2, 4}}, {"reps", 2},
                                 {"seed", 13}, {"diagnostics", {{"samples", 20}}}};
  std::vector<Cmd> cmds;
  for (const char* kind : {"exact", "partial"}) {
    nlohmann::json c = common;
    c["kind"] = kind;
    for (const char* name : {"generate", "marginals", "local", "tv-experiment", "limit-experiment"}) {
      cmds.push_back({name, c, std::string(name) == "marginals" || std::string(name) == "local"});
    }
  }
  nlohmann::json d = common;
  cmds.push_back({"diagnostics", d, false});
  cmds.push_back({"marginals", [&] { nlohmann::json m = common; m["engine"] = "mcmc"; m["mcmc_steps"] = 5000; return m; }(), true});

  int identical = 0, total = 0;
  std::string failed;
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    const Cmd& c = cmds[k];
    const fs::path dir = root / std::to_string(k);
    fs::create_directories(dir);
    nlohmann::json cfg = c.cfg;
    cfg["out"] = dir.string();
    const std::string cfg_path = (dir / "config.json").string();
    write_text(cfg_path, cfg.dump());
    std::vector<std::string> args = {"pmatch", c.name, "--config", cfg_path};
    if (c.instance) {
      nlohmann::json g = cfg;
      g["out"] = (root / ("inst" + std::to_string(k))).string();
      const std::string gp = (root / ("inst" + std::to_string(k) + ".json")).string();
      write_text(gp, g.dump());
      std::ostringstream o, e;
      cli::run({"pmatch", "generate", "--config", gp}, o, e);
      const std::string kind = cfg.value("kind", std::string("exact"));
      args.push_back("--instance");
      args.push_back((root / ("inst" + std::to_string(k)) / (kind + "_n10_r0.json")).string());
    }
    std::ostringstream o1, e1, o2, e2;
    const int r1 = cli::run(args, o1, e1);
    const auto first = snapshot(dir);
    const int r2 = cli::run(args, o2, e2);
    const auto second = snapshot(dir);
    ++total;
    if (r1 == 0 && r2 == 0 && first == second && first.size() > 0) {
      ++identical;
    } else {
      failed += " " + c.name + "(" + cfg.value("kind", std::string("exact")) + ")";
    }
  }
  fs::remove_all(root);
  return {identical == total,
          fmt("%g/%g command runs byte-identical", identical, total) +
              (failed.empty() ? "" : "; differing:" + failed)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "exact engine equivalence", ac1},
    {2, "partial engine equivalence", ac2},
    {3, "partial bijection counting", ac3},
    {4, "sort-then-local exact at full window", ac4},
    {5, "exact local TV trend", ac5},
    {6, "partial local TV trend", ac6},
    {7, "flow identities", ac7},
    {8, "flow-and-reordering coincidence", ac8},
    {9, "normalizer and marginal density", ac9},
    {10, "Q_K Cauchy trend", ac10},
    {11, "Bayes calibration", ac11},
    {12, "MCMC validation", ac12},
    {13, "CLI determinism", ac13},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int k = 1; k < argc; ++k) {
    if (std::string(argv[k]) == "--only" && k + 1 < argc) only = std::atoi(argv[++k]);
  }
  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (only && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s AC%d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
