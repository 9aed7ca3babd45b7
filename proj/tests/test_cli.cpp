#include <chrono>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "pmatch/cli.hpp"
#include "pmatch/csv.hpp"
#include "pmatch/experiments.hpp"

namespace fs = std::filesystem;
using namespace pmatch;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run pm(std::vector<std::string> args) {
  args.insert(args.begin(), "pmatch");
  std::ostringstream o, e;
  Run r;
  r.code = cli::run(args, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pmatch_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  write_text(p.string(), j.dump());
  return p.string();
}

std::string body(const fs::path& file) { return csv_body(read_text(file.string())); }

}  // namespace

TEST_CASE("usage errors and exit codes") {
  CHECK(pm({"--help"}).code == 0);
  CHECK(pm({"frobnicate"}).code == 2);
  CHECK(pm({"generate"}).code == 2);  // no seed anywhere
  const fs::path d = scratch("codes");
  const std::string bad = write_config(d, {{"seed", 1}, {"nonsense", 2}});
  CHECK(pm({"generate", "--config", bad}).code == 2);
  write_text((d / "broken.json").string(), "{");
  CHECK(pm({"generate", "--config", (d / "broken.json").string()}).code == 2);
  CHECK(pm({"marginals", "--instance", (d / "missing.json").string(), "--seed", "1"}).code == 2);
}

TEST_CASE("generate writes instances and a deterministic manifest") {
  const fs::path d = scratch("gen");
  const std::string cfg = write_config(
      d, {{"kind", "partial"}, {"n", {5, 6, 7}}, {"reps", 2}, {"seed", 11}, {"out", (d / "a").string()}});
  REQUIRE(pm({"generate", "--config", cfg}).code == 0);
  REQUIRE(pm({"generate", "--config", cfg, "--out", (d / "b").string()}).code == 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(d / "a")) files += e.path().filename() != "manifest.json";
  CHECK(files == 6);
  const auto ma = nlohmann::json::parse(read_text((d / "a" / "manifest.json").string()));
  const auto mb = nlohmann::json::parse(read_text((d / "b" / "manifest.json").string()));
  CHECK(ma["files"] == mb["files"]);
  CHECK(ma["seed"] == 11);
  const auto inst = nlohmann::json::parse(read_text((d / "a" / "partial_n5_r0.json").string()));
  CHECK(inst.contains("marks"));
}

TEST_CASE("marginals and local on a stored instance") {
  const fs::path d = scratch("marg");
  REQUIRE(pm({"generate", "--seed", "4", "--out", d.string(), "--reps", "1",
              "--config", write_config(d, {{"n", {6}}})})
              .code == 0);
  const std::string inst = (d / "exact_n6_r0.json").string();
  const auto t0 = std::chrono::steady_clock::now();
  const Run r = pm({"marginals", "--instance", inst, "--engine", "bruteforce", "--out", d.string()});
  CHECK(r.code == 0);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
  const std::string csv = read_text((d / "marginals.csv").string());
  CHECK(csv.rfind("# pmatch ", 0) == 0);
  CHECK(csv.find("config_hash=") != std::string::npos);
  CHECK(csv.find("seed=") != std::string::npos);
  std::istringstream in(csv_body(csv));
  std::string line;
  std::getline(in, line);
  CHECK(line == "i,j,prob");
  std::vector<double> sums(6, 0.0);
  while (std::getline(in, line)) {
    int i = 0, j = 0;
    double p = 0.0;
    REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf", &i, &j, &p) == 3);
    sums[i] += p;
  }
  for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(pm({"local", "--instance", inst, "--out", d.string()}).code == 0);
  CHECK(fs::exists(d / "local_M1.csv"));
  CHECK(fs::exists(d / "local_M4.csv"));

  // caps below the requested engine
  const std::string tight =
      write_config(d, {{"caps", {{"bruteforce", 3}}}, {"out", d.string()}});
  CHECK(pm({"marginals", "--config", tight, "--instance", inst, "--engine", "bruteforce"}).code == 3);
  CHECK(pm({"marginals", "--instance", inst, "--engine", "nope", "--out", d.string()}).code == 2);
}

TEST_CASE("limit experiment records the u convention") {
  const fs::path d = scratch("limit");
  const std::string cfg = write_config(d, {{"kind", "partial"},
                                           {"n", {10}},
                                           {"K", {1, 2}},
                                           {"reps", 2},
                                           {"seed", 3},
                                           {"u_convention", "sqrt"},
                                           {"out", d.string()}});
  REQUIRE(pm({"limit-experiment", "--config", cfg}).code == 0);
  const std::string c = read_text((d / "cauchy.csv").string());
  CHECK(c.find("u_convention=sqrt") != std::string::npos);
  CHECK(read_text((d / "costs.csv").string()).find("u_convention=sqrt") != std::string::npos);
}

TEST_CASE("diagnostics with no instances warns and does nothing") {
  const fs::path d = scratch("diag0");
  const Run r = pm({"diagnostics", "--seed", "1", "--reps", "0", "--out", (d / "x").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(!fs::exists(d / "x" / "diagnostics_summary.csv"));
}

TEST_CASE("diagnostics logs seeds") {
  const fs::path d = scratch("diag");
  const std::string cfg = write_config(
      d, {{"n", {12}}, {"reps", 1}, {"seed", 8}, {"diagnostics", {{"samples", 20}}}, {"out", d.string()}});
  const Run r = pm({"diagnostics", "--config", cfg});
  CHECK(r.code == 0);
  CHECK(r.err.find("seed=") != std::string::npos);
  CHECK(fs::exists(d / "events_n12_r0.csv"));
}

TEST_CASE("re-running commands gives identical CSV bodies") {
  const fs::path d = scratch("det");
  const nlohmann::json base = {{"n", {8}}, {"M", {1, 2}}, {"K", {1, 2}}, {"reps", 2}, {"seed", 21},
                               {"diagnostics", {{"samples", 10}}}};
  for (const char* cmd : {"tv-experiment", "limit-experiment", "diagnostics"}) {
    nlohmann::json a = base, b = base;
    a["out"] = (d / cmd / "a").string();
    b["out"] = (d / cmd / "b").string();
    fs::create_directories(d / cmd);
    const std::string ca = (d / cmd / "a.json").string(), cb = (d / cmd / "b.json").string();
    write_text(ca, a.dump());
    write_text(cb, b.dump());
    REQUIRE(pm({cmd, "--config", ca}).code == 0);
    REQUIRE(pm({cmd, "--config", cb}).code == 0);
    for (const auto& e : fs::directory_iterator(d / cmd / "a")) {
      CHECK(body(e.path()) == body(d / cmd / "b" / e.path().filename()));
    }
  }
}
