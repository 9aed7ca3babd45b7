#pragma once

#include <functional>
#include <span>

namespace pmatch {

struct QuadratureResult {
  double value = 0.0;
  double residual = 0.0;  // |last Richardson estimate - previous one|
};

using ScalarFn = std::function<double(double)>;

/// Composite Simpson on [a, b] with Richardson extrapolation, doubling the
/// panel count until successive extrapolated estimates differ by less than
/// tol. Throws NumericError (with the residual) if max_levels is exhausted.
QuadratureResult integrate(const ScalarFn& f, double a, double b, double tol,
                           int min_panels = 8, int max_levels = 16);

/// Same, but splits [a, b] at the given interior breakpoints (kinks of the
/// integrand) and sums the pieces. Breakpoints outside (a, b) are ignored.
QuadratureResult integrate_pieces(const ScalarFn& f, double a, double b,
                                  std::span<const double> breakpoints,
                                  double tol);

}  // namespace pmatch
