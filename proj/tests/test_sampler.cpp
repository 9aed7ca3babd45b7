#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "pmatch/error.hpp"
#include "pmatch/model.hpp"
#include "pmatch/rng.hpp"
#include "pmatch/sampler.hpp"

using namespace pmatch;

namespace {

ModelSpec spec(int n, double p = 0.5) {
  return ModelSpec{PotentialV::gaussian(1.0), DensityLambda::uniform(), n, p, 1e-8};
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

struct Stats {
  double s = 0.0, s2 = 0.0;
  int n = 0;
  void add(double v) {
    s += v;
    s2 += v * v;
    ++n;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt((s2 / n - mean() * mean()) / (n - 1)); }
};

}  // namespace

TEST_CASE("single pair instance") {
  const ExactInstance inst = sample_exact_instance(spec(1), 3);
  REQUIRE(inst.n() == 1);
  CHECK(inst.pi_star[0] == 0);
  CHECK(inst.X[0] >= 0.0);
  CHECK(inst.X[0] <= 1.0);
}

TEST_CASE("sampling is deterministic in the seed") {
  const ExactInstance a = sample_exact_instance(spec(50), 99);
  const ExactInstance b = sample_exact_instance(spec(50), 99);
  CHECK(a.X == b.X);
  CHECK(a.Y == b.Y);
  CHECK(a.pi_star == b.pi_star);
  const PartialInstance c = sample_partial_instance(spec(30), 5);
  const PartialInstance d = sample_partial_instance(spec(30), 5);
  CHECK(c.X == d.X);
  CHECK(c.Y == d.Y);
  CHECK(c.pi_star == d.pi_star);
  const PPPConfiguration e = sample_ppp_partial(DensityLambda::uniform(), 0.5,
                                                PotentialV::gaussian(1.0), 6.0, 8);
  const PPPConfiguration f = sample_ppp_partial(DensityLambda::uniform(), 0.5,
                                                PotentialV::gaussian(1.0), 6.0, 8);
  CHECK(e.x_points == f.x_points);
  CHECK(e.y_points == f.y_points);
}

TEST_CASE("scaled noise of matched pairs follows q") {
  const int n = 5000;
  const ExactInstance inst = sample_exact_instance(spec(n), 2024);
  std::vector<double> eps, ref;
  std::mt19937_64 g(1);
  std::normal_distribution<double> z;
  for (int i = 0; i < n; ++i) {
    eps.push_back(n * (inst.Y[inst.pi_star[i]] - inst.X[i]));
    ref.push_back(z(g));
  }
  const double crit = 1.628 * std::sqrt(2.0 / n);
  CHECK(ks_two_sample(eps, ref) < crit);
}

TEST_CASE("true partner index is exchangeable") {
  const int n = 6;
  std::vector<int> counts(n, 0);
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) ++counts[sample_exact_instance(spec(n), s).pi_star[0]];
  double chi2 = 0.0;
  const double e = double(seeds) / n;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  CHECK(chi2 < 15.086);  // chi-square, 5 degrees of freedom, level 0.01
}

TEST_CASE("rejection budget is enforced") {
  CounterRng rng(1, 0);
  bool threw = false;
  try {
    for (int k = 0; k < 200; ++k) {
      sample_pair(PotentialV::gaussian(1.0), DensityLambda::uniform(), 1, rng, 1);
    }
  } catch (const SamplingError&) {
    threw = true;
  }
  CHECK(threw);
}

TEST_CASE("partial instances: latent count, observation rate and invariants") {
  const ModelSpec m = spec(100, 0.5);
  const double expected = 1.0 / (0.25 * z_n(m.V, m.lambda, 100));
  Stats N, unmatched;
  for (int s = 0; s < 2000; ++s) {
    const PartialInstance inst = sample_partial_instance(m, s);
    inst.validate();
    N.add(inst.N);
    if (inst.nx() == 0) continue;
    int none = 0;
    for (const Label& l : inst.pi_star) none += !l;
    unmatched.add(double(none) / inst.nx());
  }
  CHECK(std::abs(N.mean() - expected) <= 3.0 * N.se());
  CHECK(std::abs(unmatched.mean() - 0.5) <= 3.0 * unmatched.se());
}

TEST_CASE("exact PPP window") {
  const double K = 5.0;
  Stats count;
  for (int s = 0; s < 2000; ++s) {
    const PPPConfiguration c =
        sample_ppp_exact(DensityLambda::uniform(), PotentialV::gaussian(1.0), K, s);
    int in = 0;
    for (double x : c.x_points) in += std::abs(x) <= K;
    count.add(in);
    if (s < 50) {
      CHECK(c.x_points[c.x_origin] == 0.0);
      CHECK(c.truth.size() == c.x_points.size());
      std::vector<char> seen(c.y_points.size(), 0);
      for (const Label& l : c.truth) {
        REQUIRE(l.has_value());
        CHECK(!seen[*l]);
        seen[*l] = 1;
      }
      CHECK(std::is_sorted(c.x_points.begin(), c.x_points.end()));
      CHECK(std::is_sorted(c.y_points.begin(), c.y_points.end()));
    }
  }
  CHECK(std::abs(count.mean() - (2 * K + 1)) <= 3.0 * count.se());
}

TEST_CASE("degenerate noise copies the x-points") {
  const PPPConfiguration c =
      sample_ppp_exact(DensityLambda::uniform(), PotentialV::point_mass(), 4.0, 11);
  CHECK(c.x_points == c.y_points);
}

TEST_CASE("partial PPP window") {
  const double K = 5.0, p = 0.5;
  Stats matched, ycount;
  for (int s = 0; s < 2000; ++s) {
    const PPPConfiguration c =
        sample_ppp_partial(DensityLambda::uniform(), p, PotentialV::gaussian(1.0), K, s);
    REQUIRE(c.x_points[c.x_origin] == 0.0);
    int dom = 0;
    for (const Label& l : c.truth) dom += l.has_value();
    matched.add(double(dom) / c.x_points.size());
    int in = 0;
    for (double y : c.y_points) in += std::abs(y) <= K;
    ycount.add(in);
  }
  CHECK(std::abs(matched.mean() - p) <= 3.0 * matched.se());
  // stationary y-intensity plus the partner of the origin atom
  const double expected = 2 * K * (p / (1 - p) + p * p / ((1 - p) * (1 - p))) + p;
  CHECK(std::abs(ycount.mean() - expected) <= 3.0 * ycount.se());
}

TEST_CASE("PPP window consistency") {
  const double K = 4.0;
  Stats narrow, wide;
  for (int s = 0; s < 1500; ++s) {
    const PPPConfiguration a =
        sample_ppp_exact(DensityLambda::uniform(), PotentialV::gaussian(1.0), K, s);
    const PPPConfiguration b =
        sample_ppp_exact(DensityLambda::uniform(), PotentialV::gaussian(1.0), 2 * K, s + 100000);
    int ia = 0, ib = 0;
    for (double y : a.y_points) ia += std::abs(y) <= K;
    for (double y : b.y_points) ib += std::abs(y) <= K;
    narrow.add(ia);
    wide.add(ib);
  }
  const double z = (narrow.mean() - wide.mean()) / std::hypot(narrow.se(), wide.se());
  CHECK(std::abs(z) < 2.576);
}

TEST_CASE("instance JSON round trip") {
  const ExactInstance a = sample_exact_instance(spec(20), 4);
  const ExactInstance b = exact_instance_from_json(nlohmann::json::parse(dump_json(to_json(a))));
  CHECK(a.X == b.X);
  CHECK(a.Y == b.Y);
  CHECK(a.pi_star == b.pi_star);
  const PartialInstance c = sample_partial_instance(spec(20), 4);
  const PartialInstance d =
      partial_instance_from_json(nlohmann::json::parse(dump_json(to_json(c))));
  CHECK(c.X == d.X);
  CHECK(c.Y == d.Y);
  CHECK(c.pi_star == d.pi_star);
  CHECK(c.marks == d.marks);
  CHECK_THROWS_AS(exact_instance_from_json(to_json(c)), ConfigError);
}
