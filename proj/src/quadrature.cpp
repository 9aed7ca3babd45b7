#include "pmatch/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "pmatch/error.hpp"

namespace pmatch {
namespace {

// Simpson sum over `panels` panels (each panel = two subintervals), reusing
// the odd/even node sums so that doubling only evaluates the new nodes.
struct SimpsonState {
  double a, b;
  long intervals;  // even
  double ends = 0.0, odd = 0.0, even = 0.0;

  double value() const {
    const double h = (b - a) / static_cast<double>(intervals);
    return h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
  }
};

}  // namespace

QuadratureResult integrate(const ScalarFn& f, double a, double b, double tol,
                           int min_panels, int max_levels) {
  if (!(b > a)) return {0.0, 0.0};
  SimpsonState s{a, b, 2L * std::max(1, min_panels)};
  s.ends = f(a) + f(b);
  {
    const double h = (b - a) / static_cast<double>(s.intervals);
    for (long k = 1; k < s.intervals; ++k) {
      const double v = f(a + h * static_cast<double>(k));
      (k % 2 == 1 ? s.odd : s.even) += v;
    }
  }
  double prev_simpson = s.value();
  double prev_rich = prev_simpson;
  bool have_rich = false;
  double residual = 0.0;
  for (int level = 0; level < max_levels; ++level) {
    // Old odd and even nodes both become even nodes after refinement.
    s.even += s.odd;
    s.odd = 0.0;
    s.intervals *= 2;
    const double h = (b - a) / static_cast<double>(s.intervals);
    for (long k = 1; k < s.intervals; k += 2) {
      s.odd += f(a + h * static_cast<double>(k));
    }
    const double simpson = s.value();
    const double rich = simpson + (simpson - prev_simpson) / 15.0;
    if (have_rich) {
      residual = std::abs(rich - prev_rich);
      if (residual < tol) return {rich, residual};
    }
    have_rich = true;
    prev_rich = rich;
    prev_simpson = simpson;
  }
  std::ostringstream msg;
  msg << "quadrature on [" << a << ", " << b
      << "] did not converge; residual " << residual << " vs tol " << tol;
  throw NumericError(msg.str());
}

QuadratureResult integrate_pieces(const ScalarFn& f, double a, double b,
                                  std::span<const double> breakpoints,
                                  double tol) {
  std::vector<double> cuts{a};
  for (double x : breakpoints) {
    if (x > a && x < b) cuts.push_back(x);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double u, double v) { return v - u < 1e-15; }),
             cuts.end());
  const double piece_tol = tol / static_cast<double>(cuts.size());
  QuadratureResult total;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const QuadratureResult r = integrate(f, cuts[k], cuts[k + 1], piece_tol);
    total.value += r.value;
    total.residual += r.residual;
  }
  return total;
}

}  // namespace pmatch
