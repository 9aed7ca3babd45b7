#include "pmatch/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pmatch/csv.hpp"
#include "pmatch/error.hpp"
#include "pmatch/experiments.hpp"

namespace pmatch::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> engine;
  std::optional<int> reps;
  std::optional<int> threads;
  std::string instance;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kEngineCap:
    case ErrorKind::kWindow:
      return 3;
    case ErrorKind::kNumeric:
    case ErrorKind::kSampling:
      return 4;
    default:
      return 2;
  }
}

// Flags override config keys, which override built-in defaults.
json effective_json(const Flags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    try {
      j = json::parse(read_text(f.config));
    } catch (const json::parse_error& e) {
      throw ConfigError("cannot parse '" + f.config + "': " + e.what());
    }
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.out) j["out"] = *f.out;
  if (f.engine) j["engine"] = *f.engine;
  if (f.reps) j["reps"] = *f.reps;
  if (f.threads) j["threads"] = *f.threads;
  return j;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  const fs::path p(cfg.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return p;
}

void emit(std::ostream& out, const fs::path& path, const std::string& prov,
          const std::string& body) {
  write_csv(path.string(), prov, body);
  out << "wrote " << path.string() << '\n';
}

json load_instance(const std::string& path) {
  if (path.empty()) throw ConfigError("--instance is required");
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse instance '" + path + "': " + e.what());
  }
}

int cmd_generate(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(effective_json(f));
  cfg.validate();
  const fs::path dir = out_dir(cfg);
  json files = json::array();
  for (int n : cfg.n_list) {
    for (int r = 0; r < cfg.reps; ++r) {
      const std::uint64_t seed = instance_seed(*cfg.seed, n, r);
      const json inst = cfg.kind == ModelKind::kExact
                            ? to_json(sample_exact_instance(cfg.model(n), seed))
                            : to_json(sample_partial_instance(cfg.model(n), seed));
      const std::string name =
          kind_name(cfg.kind) + "_n" + std::to_string(n) + "_r" + std::to_string(r) + ".json";
      const std::string text = dump_json(inst);
      write_text((dir / name).string(), text);
      files.push_back({{"file", name}, {"n", n}, {"rep", r}, {"seed", seed},
                       {"hash", hash_hex(text)}});
    }
  }
  const json manifest = {{"version", version_string()},
                         {"config_hash", cfg.hash()},
                         {"seed", *cfg.seed},
                         {"kind", kind_name(cfg.kind)},
                         {"files", files}};
  write_text((dir / "manifest.json").string(), dump_json(manifest));
  out << "wrote " << files.size() << " instances and " << (dir / "manifest.json").string()
      << '\n';
  return 0;
}

// Seed for commands that act on a stored instance: the flag or config seed,
// else the instance's own seed.
ExperimentConfig instance_config(const Flags& f, const json& inst) {
  json j = effective_json(f);
  if (!j.contains("seed")) j["seed"] = inst.at("seed").get<std::uint64_t>();
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  cfg.validate();
  return cfg;
}

int cmd_marginals(const Flags& f, std::ostream& out) {
  const json inst = load_instance(f.instance);
  const ExperimentConfig cfg = instance_config(f, inst);
  const fs::path dir = out_dir(cfg);
  const std::string kind = inst.value("kind", std::string());
  std::string body, engine;
  if (kind == "exact") {
    const ExactInstance e = exact_instance_from_json(inst);
    const ExactPosteriorProblem prob(e);
    if (cfg.engine == "mcmc") {
      body = marginal_table_csv(mcmc_marginals_exact(prob, cfg.mcmc_steps, *cfg.seed));
      engine = "mcmc";
    } else {
      const GroundTruth g = exact_ground_truth(prob, cfg);
      MarginalMatrix m(prob.size());
      for (int i = 0; i < prob.size(); ++i) {
        for (std::size_t k = 0; k < g.rows[i].size(); ++k) {
          m(i, static_cast<int>(*g.rows[i].labels[k])) = g.rows[i].probs[k];
        }
      }
      body = marginal_table_csv(m);
      engine = g.engine;
    }
  } else if (kind == "partial") {
    const PartialInstance p = partial_instance_from_json(inst);
    const PartialPosteriorProblem prob(p);
    if (cfg.engine == "mcmc") {
      body = partial_table_csv(mcmc_marginals_partial(prob, cfg.mcmc_steps, *cfg.seed));
      engine = "mcmc";
    } else {
      PartialEngine e = PartialEngine::kAuto;
      if (cfg.engine == "enum" || cfg.engine == "bruteforce") {
        e = PartialEngine::kBruteforce;
      } else if (cfg.engine == "dp") {
        e = PartialEngine::kDp;
      } else if (cfg.engine == "sweep") {
        e = PartialEngine::kSweep;
      } else if (cfg.engine != "auto") {
        throw ConfigError("unknown partial engine '" + cfg.engine + "'");
      }
      PartialEngine used = e;
      body = partial_table_csv(marginals_partial(prob, e, cfg.partial_caps, cfg.sweep, &used));
      engine = engine_name(used);
    }
  } else {
    throw ConfigError("instance has unknown kind '" + kind + "'");
  }
  emit(out, dir / "marginals.csv",
       provenance_line(cfg.hash(), *cfg.seed, {{"engine", engine}, {"instance", hash_hex(dump_json(inst))}}),
       body);
  return 0;
}

int cmd_local(const Flags& f, std::ostream& out) {
  const json inst = load_instance(f.instance);
  const ExperimentConfig cfg = instance_config(f, inst);
  const fs::path dir = out_dir(cfg);
  const std::string kind = inst.value("kind", std::string());
  for (int M : cfg.M_list) {
    std::vector<LocalRow> rows;
    std::string algo;
    if (kind == "exact") {
      rows = local_rows_exact(exact_instance_from_json(inst), M, cfg);
      algo = cfg.algorithm;
    } else if (kind == "partial") {
      rows = local_rows_partial(partial_instance_from_json(inst), M, cfg);
      algo = "window";
    } else {
      throw ConfigError("instance has unknown kind '" + kind + "'");
    }
    emit(out, dir / ("local_M" + std::to_string(M) + ".csv"),
         provenance_line(cfg.hash(), *cfg.seed, {{"algorithm", algo}, {"M", std::to_string(M)}}),
         local_rows_csv(rows));
  }
  return 0;
}

int cmd_tv(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(effective_json(f));
  cfg.validate();
  const fs::path dir = out_dir(cfg);
  const std::string algo = cfg.kind == ModelKind::kExact ? cfg.algorithm : "window";
  emit(out, dir / "tv.csv",
       provenance_line(cfg.hash(), *cfg.seed, {{"kind", kind_name(cfg.kind)}, {"algorithm", algo}}),
       tv_csv(tv_experiment(cfg)));
  return 0;
}

int cmd_limit(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(effective_json(f));
  cfg.validate();
  const fs::path dir = out_dir(cfg);
  const LimitResult r = limit_experiment(cfg);
  const std::vector<std::pair<std::string, std::string>> extra{
      {"kind", kind_name(cfg.kind)}, {"u_convention", u_convention_name(cfg.u)}};
  emit(out, dir / "cauchy.csv", provenance_line(cfg.hash(), *cfg.seed, extra),
       cauchy_csv(r.cauchy));
  emit(out, dir / "costs.csv", provenance_line(cfg.hash(), *cfg.seed, extra), costs_csv(r.costs));
  return 0;
}

int cmd_diagnostics(const Flags& f, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(effective_json(f));
  cfg.validate();
  if (cfg.reps == 0) {
    err << "warning: no instances requested (reps = 0); nothing to do\n";
    return 0;
  }
  const fs::path dir = out_dir(cfg);
  const std::vector<DiagnosticsRun> runs = diagnostics_experiment(cfg);
  const std::string prov = provenance_line(cfg.hash(), *cfg.seed);
  for (const DiagnosticsRun& r : runs) {
    err << "diagnostics n=" << r.n << " rep=" << r.rep << " seed=" << r.seed << '\n';
    emit(out, dir / ("events_n" + std::to_string(r.n) + "_r" + std::to_string(r.rep) + ".csv"),
         prov, event_rates_csv(r.rates));
  }
  emit(out, dir / "diagnostics_summary.csv", prov, diagnostics_summary_csv(runs));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian point-set matching in one dimension"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  Flags f;
  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--seed", f.seed, "master seed (overrides config)");
    sub->add_option("--out", f.out, "output directory (overrides config)");
    sub->add_option("--engine", f.engine, "engine name (overrides config)");
    sub->add_option("--reps", f.reps, "replicates (overrides config)");
    sub->add_option("--threads", f.threads, "worker threads (overrides config)");
  };
  CLI::App* gen = app.add_subcommand("generate", "sample instances and a manifest");
  CLI::App* marg = app.add_subcommand("marginals", "posterior marginals of one instance");
  CLI::App* loc = app.add_subcommand("local", "local-algorithm marginals of one instance");
  CLI::App* tv = app.add_subcommand("tv-experiment", "TV between local and exact marginals");
  CLI::App* lim = app.add_subcommand("limit-experiment", "Q_K convergence and limit costs");
  CLI::App* diag = app.add_subcommand("diagnostics", "regularity and locality event rates");
  for (CLI::App* s : {gen, marg, loc, tv, lim, diag}) common(s);
  for (CLI::App* s : {marg, loc}) s->add_option("--instance", f.instance, "instance JSON")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    if (gen->parsed()) return cmd_generate(f, out);
    if (marg->parsed()) return cmd_marginals(f, out);
    if (loc->parsed()) return cmd_local(f, out);
    if (tv->parsed()) return cmd_tv(f, out);
    if (lim->parsed()) return cmd_limit(f, out);
    if (diag->parsed()) return cmd_diagnostics(f, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

}  // namespace pmatch::cli
