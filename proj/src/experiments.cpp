#include "pmatch/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "pmatch/csv.hpp"
#include "pmatch/error.hpp"
#include "pmatch/parallel.hpp"

namespace pmatch {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

std::vector<int> int_list(const json& v, const std::string& key) {
  if (v.is_number_integer()) return {v.get<int>()};
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an integer or a list");
  return v.get<std::vector<int>>();
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  int count = 0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  r.count = static_cast<int>(v.size());
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / r.count;
  if (r.count > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (r.count - 1) / r.count);
  }
  return r;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string kind_name(ModelKind k) { return k == ModelKind::kExact ? "exact" : "partial"; }

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j,
             {"kind", "V", "lambda", "n", "p", "M", "D", "K", "reps", "seed", "caps", "out",
              "f_spec", "u_convention", "algorithm", "engine", "threads", "mcmc_steps",
              "diagnostics", "quadrature_tol"},
             "config");
  ExperimentConfig c;
  try {
    if (j.contains("kind")) {
      const std::string k = j.at("kind").get<std::string>();
      if (k == "exact") {
        c.kind = ModelKind::kExact;
      } else if (k == "partial") {
        c.kind = ModelKind::kPartial;
      } else {
        throw ConfigError("kind must be 'exact' or 'partial'");
      }
    }
    if (j.contains("V")) c.V = PotentialV::from_json(j.at("V"));
    if (j.contains("lambda")) c.lambda = DensityLambda::from_json(j.at("lambda"));
    if (j.contains("n")) c.n_list = int_list(j.at("n"), "n");
    if (j.contains("p")) c.p = j.at("p").get<double>();
    if (j.contains("M")) c.M_list = int_list(j.at("M"), "M");
    if (j.contains("D")) {
      const json& d = j.at("D");
      if (d.is_string()) {
        if (d.get<std::string>() != "default") throw ConfigError("D must be a number or 'default'");
      } else {
        c.D = d.get<double>();
      }
    }
    if (j.contains("K")) c.K_list = int_list(j.at("K"), "K");
    if (j.contains("reps")) c.reps = j.at("reps").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("caps")) {
      const json& k = j.at("caps");
      check_keys(k,
                 {"bruteforce", "permanent", "max_bandwidth", "bandwidth", "prune_log",
                  "max_states", "band_check", "partial_enum", "dp_max_ny", "dp_max_cells",
                  "auto_dp_cells", "sweep_prune_log", "sweep_max_states",
                  "local_sweep_prune_log"},
                 "caps");
      c.exact_caps.bruteforce = k.value("bruteforce", c.exact_caps.bruteforce);
      c.exact_caps.permanent = k.value("permanent", c.exact_caps.permanent);
      c.exact_caps.max_bandwidth = k.value("max_bandwidth", c.exact_caps.max_bandwidth);
      c.banded.bandwidth = k.value("bandwidth", c.banded.bandwidth);
      c.banded.prune_log = k.value("prune_log", c.banded.prune_log);
      c.banded.max_states = k.value("max_states", c.banded.max_states);
      c.band_check = k.value("band_check", c.band_check);
      c.partial_caps.bruteforce_count = k.value("partial_enum", c.partial_caps.bruteforce_count);
      c.partial_caps.dp_max_ny = k.value("dp_max_ny", c.partial_caps.dp_max_ny);
      c.partial_caps.dp_max_cells = k.value("dp_max_cells", c.partial_caps.dp_max_cells);
      c.partial_caps.auto_dp_cells = k.value("auto_dp_cells", c.partial_caps.auto_dp_cells);
      c.sweep.prune_log = k.value("sweep_prune_log", c.sweep.prune_log);
      c.sweep.max_states = k.value("sweep_max_states", c.sweep.max_states);
      c.local_sweep.prune_log = k.value("local_sweep_prune_log", c.local_sweep.prune_log);
      c.local_sweep.max_states = c.sweep.max_states;
    }
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("f_spec")) {
      c.f_specs.clear();
      for (const auto& s : j.at("f_spec")) c.f_specs.push_back(FSpec::parse(s.get<std::string>()));
    }
    if (j.contains("u_convention")) {
      c.u = parse_u_convention(j.at("u_convention").get<std::string>());
    }
    if (j.contains("algorithm")) c.algorithm = j.at("algorithm").get<std::string>();
    if (j.contains("engine")) c.engine = j.at("engine").get<std::string>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("mcmc_steps")) c.mcmc_steps = j.at("mcmc_steps").get<std::int64_t>();
    if (j.contains("diagnostics")) {
      const json& d = j.at("diagnostics");
      check_keys(d, {"K", "L", "samples"}, "diagnostics");
      c.diag_K = d.value("K", c.diag_K);
      c.diag_L = d.value("L", c.diag_L);
      c.diag_samples = d.value("samples", c.diag_samples);
    }
    if (j.contains("quadrature_tol")) c.quadrature_tol = j.at("quadrature_tol").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json caps = {{"bruteforce", exact_caps.bruteforce},
               {"permanent", exact_caps.permanent},
               {"max_bandwidth", exact_caps.max_bandwidth},
               {"bandwidth", banded.bandwidth},
               {"prune_log", banded.prune_log},
               {"max_states", banded.max_states},
               {"band_check", band_check},
               {"partial_enum", partial_caps.bruteforce_count},
               {"dp_max_ny", partial_caps.dp_max_ny},
               {"dp_max_cells", partial_caps.dp_max_cells},
               {"auto_dp_cells", partial_caps.auto_dp_cells},
               {"sweep_prune_log", sweep.prune_log},
               {"sweep_max_states", sweep.max_states},
               {"local_sweep_prune_log", local_sweep.prune_log}};
  std::vector<std::string> f;
  for (const FSpec& s : f_specs) f.push_back(s.name());
  json j = {{"kind", kind_name(kind)},
            {"V", V.to_json()},
            {"lambda", lambda.to_json()},
            {"n", n_list},
            {"p", p},
            {"M", M_list},
            {"K", K_list},
            {"reps", reps},
            {"caps", caps},
            {"out", out},
            {"f_spec", f},
            {"u_convention", u_convention_name(u)},
            {"algorithm", algorithm},
            {"engine", engine},
            {"threads", threads},
            {"mcmc_steps", mcmc_steps},
            {"diagnostics", {{"K", diag_K}, {"L", diag_L}, {"samples", diag_samples}}},
            {"quadrature_tol", quadrature_tol}};
  j["D"] = D ? json(*D) : json("default");
  if (seed) j["seed"] = *seed;
  return j;
}

void ExperimentConfig::validate() const {
  if (!seed) throw ConfigError("a seed is required (config key 'seed' or --seed)");
  if (n_list.empty() || M_list.empty() || K_list.empty() || f_specs.empty()) {
    throw ConfigError("n, M, K and f_spec lists must be nonempty");
  }
  for (int n : n_list) {
    if (n < 1) throw ConfigError("every n must be >= 1");
  }
  for (int M : M_list) {
    if (M < 1) throw ConfigError("every M must be >= 1");
  }
  for (int K : K_list) {
    if (K < 0) throw ConfigError("every K must be >= 0");
  }
  if (reps < 0) throw ConfigError("reps must be >= 0");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p must lie in (0, 1)");
  if (D && !(*D > 0.0)) throw ConfigError("D must be positive");
  if (algorithm != "sort" && algorithm != "flow") {
    throw ConfigError("algorithm must be 'sort' or 'flow'");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (mcmc_steps < 1) throw ConfigError("mcmc_steps must be >= 1");
  if (diag_K < 1 || diag_L < 1 || diag_samples < 1) {
    throw ConfigError("diagnostics K, L and samples must be >= 1");
  }
}

std::string ExperimentConfig::hash() const { return hash_hex(to_json().dump()); }

ModelSpec ExperimentConfig::model(int n) const { return ModelSpec{V, lambda, n, p, quadrature_tol}; }

std::uint64_t instance_seed(std::uint64_t seed, int n, int rep) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(rep));
}

GroundTruth exact_ground_truth(const ExactPosteriorProblem& prob, const ExperimentConfig& cfg) {
  const int n = prob.size();
  GroundTruth g;
  MarginalMatrix m;
  std::string e = cfg.engine;
  if (e == "auto") {
    e = n <= cfg.exact_caps.bruteforce ? "bruteforce"
        : n <= cfg.exact_caps.permanent ? "permanent"
                                        : "banded";
  }
  if (e == "bruteforce") {
    m = marginals_bruteforce_exact(prob, cfg.exact_caps);
  } else if (e == "permanent") {
    m = marginals_permanent_exact(prob, cfg.exact_caps);
  } else if (e == "banded") {
    BandedOptions b = cfg.banded;
    if (b.bandwidth > cfg.exact_caps.max_bandwidth) {
      throw EngineCapError("bandwidth exceeds the configured cap");
    }
    m = marginals_banded_exact(prob, b);
    const int wider = std::min({b.bandwidth + 5, n - 1, 31});
    if (cfg.band_check && wider > std::min(b.bandwidth, n - 1)) {
      b.bandwidth = wider;
      const MarginalMatrix w = marginals_banded_exact(prob, b);
      double worst = 0.0;
      for (int i = 0; i < n; ++i) worst = std::max(worst, tv_distance(m.row(i), w.row(i)));
      if (worst > 1e-6) {
        throw NumericError("banded ground truth is not self-consistent (TV " + fmt(worst) +
                           " between bandwidths); use a wider band or smaller n");
      }
    }
  } else {
    throw ConfigError("unknown exact engine '" + e + "' (bruteforce, permanent, banded, auto)");
  }
  g.engine = e;
  for (int i = 0; i < n; ++i) g.rows.push_back(m.row(i));
  return g;
}

GroundTruth partial_ground_truth(const PartialPosteriorProblem& prob,
                                 const ExperimentConfig& cfg) {
  PartialEngine e = PartialEngine::kAuto;
  if (cfg.engine == "enum" || cfg.engine == "bruteforce") {
    e = PartialEngine::kBruteforce;
  } else if (cfg.engine == "dp") {
    e = PartialEngine::kDp;
  } else if (cfg.engine == "sweep") {
    e = PartialEngine::kSweep;
  } else if (cfg.engine != "auto") {
    throw ConfigError("unknown partial engine '" + cfg.engine + "' (enum, dp, sweep, auto)");
  }
  PartialEngine used = e;
  const PartialMarginalTable t = marginals_partial(prob, e, cfg.partial_caps, cfg.sweep, &used);
  GroundTruth g;
  g.engine = engine_name(used);
  for (int i = 0; i < prob.nx(); ++i) g.rows.push_back(t.row(i));
  return g;
}

std::vector<LocalRow> local_rows_exact(const ExactInstance& inst, int M,
                                       const ExperimentConfig& cfg) {
  if (cfg.algorithm == "flow") {
    const double D = cfg.D ? *cfg.D : default_flow_radius(M, inst.model.lambda.lambda_min());
    return tilde_marginals_exact(inst, M, D, cfg.exact_caps);
  }
  return local_marginals_exact(ExactPosteriorProblem(inst), M, cfg.exact_caps);
}

std::vector<LocalRow> local_rows_partial(const PartialInstance& inst, int M,
                                         const ExperimentConfig& cfg) {
  PartialLocalOptions opt;
  opt.caps = cfg.partial_caps;
  opt.sweep = cfg.local_sweep;
  return local_marginals_partial(PartialPosteriorProblem(inst), inst.model.n, M, opt);
}

std::vector<TvRow> tv_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t nm = cfg.M_list.size();
  struct Cell {
    std::vector<double> tv;  // per M; NaN when every row was skipped
    std::vector<double> skipped, rows;
  };
  std::vector<TvRow> out;
  for (int n : cfg.n_list) {
    std::vector<Cell> cells(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
      const std::uint64_t seed = instance_seed(*cfg.seed, n, static_cast<int>(r));
      Cell& c = cells[r];
      c.tv.assign(nm, std::nan(""));
      c.skipped.assign(nm, 0.0);
      c.rows.assign(nm, 0.0);
      std::vector<MatchDistribution> truth;
      std::vector<std::vector<LocalRow>> local;
      if (cfg.kind == ModelKind::kExact) {
        const ExactInstance inst = sample_exact_instance(cfg.model(n), seed);
        truth = exact_ground_truth(ExactPosteriorProblem(inst), cfg).rows;
        for (int M : cfg.M_list) local.push_back(local_rows_exact(inst, M, cfg));
      } else {
        const PartialInstance inst = sample_partial_instance(cfg.model(n), seed);
        truth = partial_ground_truth(PartialPosteriorProblem(inst), cfg).rows;
        for (int M : cfg.M_list) local.push_back(local_rows_partial(inst, M, cfg));
      }
      for (std::size_t k = 0; k < nm; ++k) {
        double s = 0.0;
        int used = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
          c.rows[k] += 1.0;
          if (local[k][i].flag == EngineFlag::kSkipped) {
            c.skipped[k] += 1.0;
            continue;
          }
          s += tv_distance(truth[i], local[k][i].dist);
          ++used;
        }
        if (used > 0) c.tv[k] = s / used;
      }
    });
    for (std::size_t k = 0; k < nm; ++k) {
      std::vector<double> vals;
      double skipped = 0.0, rows = 0.0;
      for (const Cell& c : cells) {
        if (!std::isnan(c.tv[k])) vals.push_back(c.tv[k]);
        skipped += c.skipped[k];
        rows += c.rows[k];
      }
      const MeanSe ms = mean_se(vals);
      out.push_back({n, cfg.M_list[k], ms.mean, ms.se, ms.count, rows > 0 ? skipped / rows : 0.0});
    }
  }
  return out;
}

std::string tv_csv(const std::vector<TvRow>& rows) {
  std::string out = "n,M,mean_tv,se,reps,skip_rate\n";
  for (const TvRow& r : rows) {
    out += std::to_string(r.n) + ',' + std::to_string(r.M) + ',' + fmt(r.mean_tv) + ',' +
           fmt(r.se) + ',' + std::to_string(r.reps) + ',' + fmt(r.skip_rate) + '\n';
  }
  return out;
}

LimitResult limit_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  LimitResult res;
  const bool partial = cfg.kind == ModelKind::kPartial;
  if (cfg.K_list.size() >= 2) {
    CauchyConfig cc;
    cc.lambda = cfg.lambda;
    if (partial) cc.p = cfg.p;
    cc.V = cfg.V;
    cc.K_list = cfg.K_list;
    cc.reps = std::max(1, cfg.reps);
    cc.seed = *cfg.seed;
    cc.u = cfg.u;
    cc.opt.partial_caps = cfg.partial_caps;
    cc.threads = cfg.threads;
    res.cauchy = check_qk_cauchy(cc);
  }
  const int K = cfg.K_list.back();
  const std::size_t nf = cfg.f_specs.size();
  // limit side: f(Q_K^0, truth of the origin) per replicate
  std::vector<std::vector<double>> lim(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = derive_seed(*cfg.seed, r);
    QkOptions opt;
    opt.partial_caps = cfg.partial_caps;
    try {
      QkMarginal q;
      Label truth;
      if (partial) {
        const PPPConfiguration c = sample_ppp_partial(cfg.lambda, cfg.p, cfg.V, K, seed);
        q = qk_marginal_partial(c, cfg.V, K, cfg.u, opt);
        const Label& t = c.truth[c.x_origin];
        if (t) truth = c.y_index(static_cast<std::size_t>(*t));
      } else {
        const PPPConfiguration c = sample_ppp_exact(
            cfg.lambda, cfg.V, sample_halfwidth(K, cfg.lambda.lambda_min()), seed);
        q = qk_marginal_exact(c, cfg.V, K, opt);
        truth = 0;
      }
      for (const FSpec& f : cfg.f_specs) lim[r].push_back(f(q.probs, truth));
    } catch (const EngineCapError&) {
    } catch (const WindowTooSmall&) {
    }
  });
  for (int n : cfg.n_list) {
    std::vector<std::vector<double>> fin(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
      const std::uint64_t seed = instance_seed(*cfg.seed, n, static_cast<int>(r));
      std::vector<MatchDistribution> rows;
      std::vector<Label> truth;
      if (partial) {
        const PartialInstance inst = sample_partial_instance(cfg.model(n), seed);
        if (inst.nx() == 0) return;
        rows = partial_ground_truth(PartialPosteriorProblem(inst), cfg).rows;
        truth = inst.pi_star;
      } else {
        const ExactInstance inst = sample_exact_instance(cfg.model(n), seed);
        rows = exact_ground_truth(ExactPosteriorProblem(inst), cfg).rows;
        for (int j : inst.pi_star) truth.emplace_back(j);
      }
      for (const FSpec& f : cfg.f_specs) {
        fin[r].push_back(empirical_cost_average(rows, truth, f));
      }
    });
    for (std::size_t k = 0; k < nf; ++k) {
      std::vector<double> a, b;
      for (const auto& v : fin) {
        if (!v.empty()) a.push_back(v[k]);
      }
      for (const auto& v : lim) {
        if (!v.empty()) b.push_back(v[k]);
      }
      const MeanSe fa = mean_se(a), lb = mean_se(b);
      res.costs.push_back(
          {cfg.f_specs[k].name(), n, fa.mean, fa.se, lb.mean, lb.se, fa.count, lb.count});
    }
  }
  return res;
}

std::string costs_csv(const std::vector<CostRow>& rows) {
  std::string out = "f_spec,n,finite_mean,finite_se,limit_mean,limit_se,abs_diff,reps,limit_reps\n";
  for (const CostRow& r : rows) {
    out += r.f + ',' + std::to_string(r.n) + ',' + fmt(r.finite_mean) + ',' + fmt(r.finite_se) +
           ',' + fmt(r.limit_mean) + ',' + fmt(r.limit_se) + ',' +
           fmt(std::abs(r.finite_mean - r.limit_mean)) + ',' + std::to_string(r.reps) + ',' +
           std::to_string(r.limit_reps) + '\n';
  }
  return out;
}

std::vector<DiagnosticsRun> diagnostics_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kind != ModelKind::kExact) {
    throw ConfigError("diagnostics events are defined for the exact model only");
  }
  if (cfg.engine != "auto" && cfg.engine != "mcmc") {
    throw ConfigError("diagnostics engine must be 'auto' or 'mcmc'");
  }
  std::vector<DiagnosticsRun> runs;
  for (int n : cfg.n_list) {
    for (int r = 0; r < cfg.reps; ++r) runs.push_back({n, r, instance_seed(*cfg.seed, n, r), {}});
  }
  parallel_for(runs.size(), cfg.threads, [&](std::size_t k) {
    DiagnosticsRun& run = runs[k];
    const ExactInstance inst = sample_exact_instance(cfg.model(run.n), run.seed);
    const ExactPosteriorProblem prob(inst);
    std::vector<std::vector<int>> samples;
    if (cfg.engine == "mcmc") {
      for (const auto& pi : mcmc_sample_exact(prob, cfg.mcmc_steps, run.seed)) {
        samples.push_back(to_sorted(prob, pi));
      }
    } else {
      BandedOptions b = cfg.banded;
      b.bandwidth = std::min(b.bandwidth, std::max(0, run.n - 1));
      const BandedTransfer bt(prob.sorted_log_weights(), b);
      CounterRng rng(run.seed, 1);
      for (int s = 0; s < cfg.diag_samples; ++s) samples.push_back(bt.sample(rng));
    }
    run.rates = event_rates(prob, inst.model.lambda.lambda_min(), cfg.diag_K, cfg.diag_L, samples);
  });
  return runs;
}

std::string diagnostics_summary_csv(const std::vector<DiagnosticsRun>& runs) {
  std::string out = "n,rep,seed,samples,A_fraction,mean_G_complement,iota\n";
  for (const DiagnosticsRun& r : runs) {
    out += std::to_string(r.n) + ',' + std::to_string(r.rep) + ',' + std::to_string(r.seed) +
           ',' + std::to_string(r.rates.samples) + ',' + fmt(r.rates.A_fraction) + ',' +
           fmt(r.rates.mean_G_complement) + ',' + fmt(r.rates.iota) + '\n';
  }
  return out;
}

}  // namespace pmatch
