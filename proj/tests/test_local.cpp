#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pmatch/error.hpp"
#include "pmatch/local.hpp"

using namespace pmatch;

namespace {

ModelSpec model(int n, double sigma = 1.0) {
  return ModelSpec{PotentialV::gaussian(sigma), DensityLambda::uniform(), n, 0.5, 1e-8};
}

std::vector<int> ranks(const std::vector<double>& v) {
  const std::vector<int> s = sort_maps(v, v).s;
  std::vector<int> r(v.size());
  for (std::size_t k = 0; k < s.size(); ++k) r[s[k]] = static_cast<int>(k);
  return r;
}

}  // namespace

TEST_CASE("sort maps") {
  CHECK(sort_maps({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}).s == std::vector<int>{0, 1, 2});
  CHECK(sort_maps({0.4, 0.3, 0.2, 0.1}, {0.0}).s == std::vector<int>{3, 2, 1, 0});
  CHECK(sort_maps({0.5, 0.5, 0.1}, {0.0}).s == std::vector<int>{2, 0, 1});
  const ExactInstance inst = sample_exact_instance(model(40), 3);
  const SortMaps m = sort_maps(inst.X, inst.Y);
  for (int k = 0; k + 1 < 40; ++k) {
    CHECK(inst.X[m.s[k]] <= inst.X[m.s[k + 1]]);
    CHECK(inst.Y[m.t[k]] <= inst.Y[m.t[k + 1]]);
  }
}

TEST_CASE("sort-then-local at full width equals the posterior") {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const ExactPosteriorProblem prob(sample_exact_instance(model(7), s));
    const MarginalMatrix full = marginals_bruteforce_exact(prob);
    const std::vector<LocalRow> rows = local_marginals_exact(prob, 7);
    for (int i = 0; i < 7; ++i) CHECK(tv_distance(rows[i].dist, full.row(i)) <= 1e-12);
  }
  const ExactPosteriorProblem one(sample_exact_instance(model(1), 0));
  CHECK(local_marginals_exact(one, 1)[0].dist.prob(Label{0}) == 1.0);
  CHECK_THROWS_AS(local_marginals_exact(one, 0), DomainError);
}

TEST_CASE("sort-then-local is translation equivariant") {
  const ExactInstance inst = sample_exact_instance(model(30), 8);
  const ExactPosteriorProblem a(inst);
  std::vector<double> X = inst.X, Y = inst.Y;
  for (double& x : X) x += 0.125;
  for (double& y : Y) y += 0.125;
  const ExactPosteriorProblem b(X, Y, inst.model.V, 30.0);
  const std::vector<LocalRow> ra = local_marginals_exact(a, 3);
  const std::vector<LocalRow> rb = local_marginals_exact(b, 3);
  for (int i = 0; i < 30; ++i) CHECK(tv_distance(ra[i].dist, rb[i].dist) < 1e-12);
}

TEST_CASE("rows sum to one") {
  const ExactPosteriorProblem prob(sample_exact_instance(model(50), 9));
  for (const LocalRow& r : local_marginals_exact(prob, 4)) CHECK_NOTHROW(r.dist.check(1e-12));
}

TEST_CASE("flow statistics") {
  const ExactInstance inst = sample_exact_instance(model(50), 10);
  for (int i = 0; i < 50; ++i) {
    const FlowStats f = flow_stats(inst, i, 5.0);
    CHECK(f.F == f.L - f.R);
    CHECK(f.FD == f.LD - f.RD);
    CHECK(f.L >= 0);
    CHECK(f.R >= 0);
    CHECK(f.LD >= 0);
    CHECK(f.RD >= 0);
  }
  CHECK_THROWS_AS(flow_stats(inst, 50, 1.0), DomainError);
  CHECK_THROWS_AS(flow_stats(inst, 0, 0.0), DomainError);

  ExactInstance sorted;
  sorted.model = model(4);
  sorted.X = {0.1, 0.3, 0.5, 0.7};
  sorted.Y = {0.12, 0.29, 0.52, 0.69};
  sorted.pi_star = {0, 1, 2, 3};
  for (int i = 0; i < 4; ++i) CHECK(flow_stats(sorted, i, 10.0).F == 0);

  ExactInstance cross;
  cross.model = model(2);
  cross.X = {0.2, 0.4};
  cross.Y = {0.45, 0.25};
  cross.pi_star = {0, 1};  // X_0 -> 0.45, X_1 -> 0.25
  // X_0 has x-rank 0 and y-rank 1; X_1 has x-rank 1 and y-rank 0
  CHECK(flow_stats(cross, 0, 10.0).F == -1);
  CHECK(flow_stats(cross, 1, 10.0).F == 1);
}

TEST_CASE("flow equals the rank difference") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ExactInstance inst = sample_exact_instance(model(50), 200 + s);
    const std::vector<int> rx = ranks(inst.X);
    const std::vector<int> ry = ranks(inst.Y);
    for (int i = 0; i < 50; ++i) {
      CHECK(flow_stats(inst, i, 3.0).F == rx[i] - ry[inst.pi_star[i]]);
    }
  }
}

TEST_CASE("flow-and-reordering") {
  const int n = 60, M = 3;
  const double D = default_flow_radius(M, 1.0);
  CHECK(D == doctest::Approx(4.5 + 3 + 1));
  const ExactInstance inst = sample_exact_instance(model(n), 12);
  const ExactPosteriorProblem prob(inst);
  const std::vector<LocalRow> hat = local_marginals_exact(prob, M);
  const std::vector<LocalRow> tilde = tilde_marginals_exact(inst, M, D);
  int coincide = 0, interior = 0;
  for (int i = 0; i < n; ++i) {
    CHECK_NOTHROW(tilde[i].dist.check(1e-12));
    const int r = prob.s_inv()[i];
    if (r < M || r >= n - M) continue;
    ++interior;
    if (tilde[i].flag == EngineFlag::kFallback) {
      CHECK(tilde[i].dist.prob(Label{inst.pi_star[i]}) == 1.0);
      continue;
    }
    const FlowStats f = flow_stats(inst, i, D);
    if (f.FD == f.F) {
      ++coincide;
      CHECK(tv_distance(tilde[i].dist, hat[i].dist) == 0.0);
    }
  }
  CHECK(coincide >= interior * 9 / 10);
}

TEST_CASE("flow-and-reordering with degenerate noise") {
  const int n = 20;
  const ModelSpec m{PotentialV::point_mass(), DensityLambda::uniform(), n, 0.5, 1e-8};
  const ExactInstance inst = sample_exact_instance(m, 4);
  const std::vector<LocalRow> forced = tilde_marginals_exact(inst, 2, default_flow_radius(2, 1.0));
  for (int i = 0; i < n; ++i) CHECK(forced[i].dist.prob(Label{inst.pi_star[i]}) == 1.0);

  // strictly convex potential on an even lattice with X = Y
  ExactInstance lat;
  lat.model = model(n);
  for (int k = 0; k < n; ++k) lat.X.push_back((k + 0.5) / n);
  lat.Y = lat.X;
  for (int k = 0; k < n; ++k) lat.pi_star.push_back(k);
  const std::vector<LocalRow> tilde = tilde_marginals_exact(lat, 2, default_flow_radius(2, 1.0));
  for (int i = 0; i < n; ++i) {
    const MatchDistribution& d = tilde[i].dist;
    const double truth = d.prob(Label{i});
    for (double p : d.probs) CHECK(truth >= p);
  }
}

TEST_CASE("windowed partial posterior") {
  CHECK(partial_window(0.55, 10, 2).first == doctest::Approx(0.3));
  CHECK(partial_window(0.55, 10, 2).second == doctest::Approx(0.7));
  CHECK(partial_window(0.05, 10, 3).first == 0.0);
  CHECK(partial_window(0.95, 10, 3).second == 1.0);
  CHECK_THROWS_AS(partial_window(0.5, 10, 0), DomainError);

  const ModelSpec m = model(8);
  const PartialInstance inst = sample_partial_instance(m, 21);
  const PartialPosteriorProblem prob(inst);
  const PartialMarginalTable full = marginals_partial(prob, PartialEngine::kAuto);
  const std::vector<LocalRow> rows = local_marginals_partial(prob, 8, 8);
  for (int i = 0; i < prob.nx(); ++i) {
    CHECK(tv_distance(rows[i].dist, full.row(i)) < 1e-12);
    CHECK_NOTHROW(rows[i].dist.check(1e-12));
  }

  // a lone point in its window is unmatched with probability one
  const PartialPosteriorProblem lone({0.05, 0.9}, {0.5}, PotentialV::gaussian(1.0), 10.0,
                                     {0.0, 0.0}, {0.0});
  const std::vector<LocalRow> lr = local_marginals_partial(lone, 10, 1);
  CHECK(lr[0].dist.prob(Label{}) == 1.0);
  CHECK(lr[1].dist.prob(Label{}) == 1.0);
}

TEST_CASE("points in one grid cell share their window") {
  const PartialPosteriorProblem prob({0.51, 0.55, 0.58, 0.2}, {0.5, 0.56, 0.3},
                                     PotentialV::gaussian(1.0), 10.0, {0.0, 0.0, 0.0, 0.0},
                                     {0.0, 0.0, 0.0});
  const std::vector<LocalRow> rows = local_marginals_partial(prob, 10, 1);
  std::vector<Label> l0 = rows[0].dist.labels, l1 = rows[1].dist.labels;
  CHECK(l0 == l1);
  CHECK(rows[0].dist.prob(Label{2}) == 0.0);
}

TEST_CASE("skipped windows are flagged") {
  std::vector<double> X(30), Y(30);
  for (int k = 0; k < 30; ++k) X[k] = Y[k] = 0.5 + k * 1e-4;
  const PartialPosteriorProblem prob(X, Y, PotentialV::gaussian(1.0), 10.0,
                                     std::vector<double>(30, 0.0), std::vector<double>(30, 0.0));
  PartialLocalOptions opt;
  opt.allow_sweep = false;
  const std::vector<LocalRow> rows = local_marginals_partial(prob, 10, 1, opt);
  CHECK(rows[0].flag == EngineFlag::kSkipped);
  const std::string csv = local_rows_csv(rows);
  CHECK(csv.find("0,,,skipped") != std::string::npos);
}
