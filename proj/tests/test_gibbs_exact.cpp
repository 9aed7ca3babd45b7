#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "pmatch/error.hpp"
#include "pmatch/gibbs_exact.hpp"
#include "pmatch/sampler.hpp"

using namespace pmatch;

namespace {

ExactInstance instance(int n, std::uint64_t seed, double sigma = 1.0) {
  return sample_exact_instance(
      ModelSpec{PotentialV::gaussian(sigma), DensityLambda::uniform(), n, 0.5, 1e-8}, seed);
}

double max_diff(const MarginalMatrix& a, const MarginalMatrix& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.p.size(); ++k) d = std::max(d, std::abs(a.p[k] - b.p[k]));
  return d;
}

// Independent oracle: plain enumeration in linear scale with std::next_permutation.
MarginalMatrix naive_marginals(const LogMatrix& a) {
  const int n = a.n;
  std::vector<int> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  MarginalMatrix m(n);
  double z = 0.0;
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a(i, pi[i]);
    const double w = std::exp(s);
    z += w;
    for (int i = 0; i < n; ++i) m(i, pi[i]) += w;
  } while (std::next_permutation(pi.begin(), pi.end()));
  for (double& p : m.p) p /= z;
  return m;
}

}  // namespace

TEST_CASE("hamiltonian") {
  const ExactInstance one = instance(1, 1);
  const ExactPosteriorProblem p1(one);
  CHECK(hamiltonian_exact(p1, {0}) ==
        doctest::Approx(one.model.V(1.0 * (one.X[0] - one.Y[0]))).epsilon(1e-14));

  const ExactInstance inst = instance(12, 2);
  const ExactPosteriorProblem prob(inst);
  CHECK(std::isfinite(hamiltonian_exact(prob, inst.pi_star)));
  std::mt19937_64 g(4);
  std::vector<int> pi = inst.pi_star;
  for (int t = 0; t < 200; ++t) {
    const int i = static_cast<int>(g() % 12);
    const int j = static_cast<int>(g() % 12);
    const double before = hamiltonian_exact(prob, pi);
    const double delta = hamiltonian_swap_delta(prob, pi, i, j);
    std::swap(pi[i], pi[j]);
    CHECK(hamiltonian_exact(prob, pi) - before == doctest::Approx(delta).epsilon(1e-9));
  }
  CHECK_THROWS_AS(hamiltonian_exact(prob, std::vector<int>(12, 0)), ContractViolation);
}

TEST_CASE("brute force small cases") {
  const ExactPosteriorProblem p1(instance(1, 3));
  CHECK(marginals_bruteforce_exact(p1)(0, 0) == 1.0);
  const ExactPosteriorProblem flat({0.1, 0.9}, {0.2, 0.7}, PotentialV::tabulated({-10.0, 10.0}, {0.0, 0.0}), 1.0);
  const MarginalMatrix m = marginals_bruteforce_exact(flat);
  for (double p : m.p) CHECK(p == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(marginals_bruteforce_exact(ExactPosteriorProblem(instance(11, 1))),
                  EngineCapError);
}

TEST_CASE("engines agree with an independent enumeration") {
  for (int n : {3, 5, 7}) {
    for (std::uint64_t s = 0; s < 4; ++s) {
      const ExactPosteriorProblem prob(instance(n, 100 * n + s, 2.0));
      const MarginalMatrix oracle = naive_marginals(prob.log_weights());
      CHECK(max_diff(marginals_bruteforce_exact(prob), oracle) < 1e-10);
      CHECK(max_diff(marginals_permanent_exact(prob), oracle) < 1e-10);
      const MarginalMatrix banded =
          marginals_banded_exact(prob, BandedOptions{n - 1, INFINITY, 4'000'000});
      CHECK(max_diff(banded, oracle) < 1e-10);
    }
  }
}

TEST_CASE("permanent values and scale invariance") {
  CHECK(permanent(std::vector<double>(9, 1.0), 3) == doctest::Approx(6.0));
  CHECK(permanent({1, 2, 3, 4}, 2) == doctest::Approx(10.0));
  const ExactPosteriorProblem prob(instance(6, 8));
  LogMatrix a = prob.log_weights();
  const MarginalMatrix base = permanent_marginals(a);
  for (int j = 0; j < a.n; ++j) a(2, j) += std::log(1e3);
  CHECK(max_diff(permanent_marginals(a), base) < 1e-12);
  const double lp = log_permanent(prob.log_weights());
  double direct = 0.0;
  {
    std::vector<double> w(prob.log_weights().a.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(prob.log_weights().a[k]);
    direct = std::log(permanent(w, 6));
  }
  CHECK(lp == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("row marginal of a single index") {
  const ExactPosteriorProblem prob(instance(8, 12));
  const MarginalMatrix full = marginals_permanent_exact(prob);
  for (int r : {0, 3, 7}) {
    const std::vector<double> row = permanent_row_marginals(prob.log_weights(), r);
    for (int j = 0; j < 8; ++j) CHECK(std::abs(row[j] - full(r, j)) < 1e-12);
  }
}

TEST_CASE("table sums") {
  const ExactPosteriorProblem prob(instance(9, 21));
  for (const MarginalMatrix& m :
       {marginals_bruteforce_exact(prob), marginals_permanent_exact(prob),
        marginals_banded_exact(prob, BandedOptions{4, 45.0, 4'000'000})}) {
    CHECK(m.max_row_sum_error() < 1e-12);
    CHECK(m.max_col_sum_error() < 1e-9);
  }
}

TEST_CASE("band zero forces sorted order") {
  const ExactPosteriorProblem prob(instance(30, 5));
  const MarginalMatrix m = marginals_banded_exact(prob, BandedOptions{0, 45.0, 4'000'000});
  for (int k = 0; k < 30; ++k) CHECK(m(prob.s()[k], prob.t()[k]) == doctest::Approx(1.0));
}

TEST_CASE("band ladder converges") {
  const ExactPosteriorProblem prob(instance(200, 77));
  auto tv = [](const MarginalMatrix& a, const MarginalMatrix& b) {
    double worst = 0.0;
    for (int i = 0; i < a.n; ++i) worst = std::max(worst, tv_distance(a.row(i), b.row(i)));
    return worst;
  };
  const MarginalMatrix b4 = marginals_banded_exact(prob, BandedOptions{4, 45.0, 4'000'000});
  const MarginalMatrix b8 = marginals_banded_exact(prob, BandedOptions{8, 45.0, 4'000'000});
  const MarginalMatrix b12 = marginals_banded_exact(prob, BandedOptions{12, 45.0, 4'000'000});
  const double e48 = tv(b4, b8);
  const double e812 = tv(b8, b12);
  MESSAGE("band ladder TV 4->8: " << e48 << ", 8->12: " << e812);
  CHECK(e48 >= e812);
}

TEST_CASE("banded sampler draws from the table") {
  const ExactPosteriorProblem prob(instance(6, 31, 3.0));
  const BandedTransfer bt(prob.sorted_log_weights(), BandedOptions{5, INFINITY, 4'000'000});
  const MarginalMatrix m = bt.marginals();
  CounterRng rng(17, 0);
  MarginalMatrix emp(6);
  const int draws = 40000;
  for (int d = 0; d < draws; ++d) {
    const std::vector<int> pi = bt.sample(rng);
    for (int i = 0; i < 6; ++i) emp(i, pi[i]) += 1.0 / draws;
  }
  for (std::size_t k = 0; k < m.p.size(); ++k) {
    const double se = std::sqrt(m.p[k] * (1 - m.p[k]) / draws) + 1e-9;
    CHECK(std::abs(emp.p[k] - m.p[k]) <= 5.0 * se);
  }
}

TEST_CASE("shuffled enumeration order") {
  const ExactPosteriorProblem prob(instance(7, 40));
  const MarginalMatrix base = bruteforce_marginals(prob.log_weights());
  for (std::uint64_t s = 1; s <= 3; ++s) {
    CHECK(max_diff(bruteforce_marginals(prob.log_weights(), 10, s), base) <= 1e-12);
  }
}

TEST_CASE("label equivariance") {
  const ExactInstance inst = instance(7, 41);
  const ExactPosteriorProblem prob(inst);
  std::vector<int> perm = {3, 6, 0, 5, 1, 4, 2};  // new column k holds old Y[perm[k]]
  std::vector<double> y2(7);
  for (int k = 0; k < 7; ++k) y2[k] = inst.Y[perm[k]];
  const ExactPosteriorProblem prob2(inst.X, y2, inst.model.V, 7.0);
  const MarginalMatrix a = marginals_permanent_exact(prob);
  const MarginalMatrix b = marginals_permanent_exact(prob2);
  for (int i = 0; i < 7; ++i) {
    for (int k = 0; k < 7; ++k) CHECK(std::abs(b(i, k) - a(i, perm[k])) < 1e-12);
  }
}

TEST_CASE("conditional marginals under empty boundaries") {
  const ExactPosteriorProblem prob(instance(8, 50, 2.0));
  const MarginalMatrix full = marginals_bruteforce_exact(prob);
  for (int i = 0; i < 8; ++i) {
    const MatchDistribution c = conditional_marginals_empty_boundary(prob, i, 8);
    CHECK(tv_distance(c, full.row(prob.s()[i])) < 1e-12);
    const MatchDistribution single = conditional_marginals_empty_boundary(prob, i, 0);
    CHECK(single.prob(Label{prob.t()[i]}) == doctest::Approx(1.0));
  }

  // filtered enumeration over all bijections in sorted coordinates
  const int m = 2;
  const LogMatrix a = prob.sorted_log_weights();
  for (int i = 0; i < 8; ++i) {
    const int lo = std::max(i - m, 0), hi = std::min(i + m, 7);
    std::vector<int> pi(8);
    std::iota(pi.begin(), pi.end(), 0);
    std::vector<double> acc(8, 0.0);
    double z = 0.0;
    do {
      bool ok = true;
      for (int k = 0; k < 8; ++k) ok = ok && ((k >= lo && k <= hi) == (pi[k] >= lo && pi[k] <= hi));
      if (!ok) continue;
      double s = 0.0;
      for (int k = 0; k < 8; ++k) s += a(k, pi[k]);
      z += std::exp(s);
      acc[pi[i]] += std::exp(s);
    } while (std::next_permutation(pi.begin(), pi.end()));
    const MatchDistribution c = conditional_marginals_empty_boundary(prob, i, m);
    for (int k = 0; k < 8; ++k) {
      CHECK(std::abs(c.prob(Label{prob.t()[k]}) - acc[k] / z) < 1e-12);
    }
  }
}

TEST_CASE("CSV output") {
  const ExactPosteriorProblem prob(instance(3, 60));
  const std::string csv = marginal_table_csv(marginals_bruteforce_exact(prob));
  CHECK(csv.rfind("i,j,prob\n", 0) == 0);
  const auto meta = marginal_table_metadata("banded", 20, 0.5);
  CHECK(meta["engine"] == "banded");
  CHECK(meta["B"] == 20);
}
