#include <cmath>
#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "pmatch/kernels.hpp"

using namespace pmatch::simd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& g, double lo = -2.0,
                               double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(g);
  return v;
}

bool close(double a, double b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("scalar table is always available and listed first") {
  const auto all = available_kernels();
  REQUIRE(!all.empty());
  CHECK(all.front() == &scalar_kernels());
  CHECK(scalar_kernels().isa == Isa::kScalar);
}

TEST_CASE("PMATCH_SIMD=scalar forces the reference path") {
  const char* env = std::getenv("PMATCH_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) {
    CHECK(active_kernels().isa == Isa::kScalar);
  } else {
    CHECK(&active_kernels() == available_kernels().back());
  }
}

TEST_CASE("vector kernels match the scalar reference") {
  std::mt19937_64 g(12345);
  const KernelTable& ref = scalar_kernels();
  for (const KernelTable* t : available_kernels()) {
    CAPTURE(t->name);
    for (std::size_t n = 0; n <= 67; ++n) {
      CAPTURE(n);
      const auto x = random_vec(n, g);
      const auto y0 = random_vec(n, g);

      auto y1 = y0, y2 = y0;
      ref.axpy(0.37, x.data(), y1.data(), n);
      t->axpy(0.37, x.data(), y2.data(), n);
      for (std::size_t k = 0; k < n; ++k) CHECK(close(y1[k], y2[k]));

      CHECK(close(ref.dot(x.data(), y0.data(), n), t->dot(x.data(), y0.data(), n), 1e-11));

      const auto pos = random_vec(n, g, 0.5, 1.5);
      CHECK(close(ref.product(pos.data(), n), t->product(pos.data(), n), 1e-11));

      if (n > 0) CHECK(ref.max(x.data(), n) == t->max(x.data(), n));

      if (n <= 32) {
        std::vector<double> a1(n, 1.0), a2(n, 1.0);
        const auto mask = static_cast<std::uint32_t>(g());
        ref.masked_add(a1.data(), mask, 0.25, n);
        t->masked_add(a2.data(), mask, 0.25, n);
        CHECK(a1 == a2);
      }

      std::vector<double> o1(n), o2(n);
      ref.gaussian_log_weights(0.3, y0.data(), n, 7.0, 0.5, 0.9189385332046727, o1.data());
      t->gaussian_log_weights(0.3, y0.data(), n, 7.0, 0.5, 0.9189385332046727, o2.data());
      for (std::size_t k = 0; k < n; ++k) CHECK(close(o1[k], o2[k]));
    }
  }
}

TEST_CASE("gaussian log weights follow the closed form") {
  const double ys[3] = {0.0, 0.1, -0.2};
  double out[3];
  scalar_kernels().gaussian_log_weights(0.05, ys, 3, 10.0, 0.5, 0.9189385332046727, out);
  for (int k = 0; k < 3; ++k) {
    const double e = (0.05 - ys[k]) * 10.0;
    CHECK(out[k] == doctest::Approx(-0.5 * e * e - 0.9189385332046727).epsilon(1e-14));
  }
}
