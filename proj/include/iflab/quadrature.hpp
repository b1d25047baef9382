#pragma once
#include <functional>

namespace iflab {

// Adaptive Simpson on [a, b] to absolute tolerance tol. Throws
// Errc::QuadratureFailure if the recursion cannot reach tol by max_depth.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10, int max_depth = 40);

// Trapezoid rule over m uniformly spaced points on [a, b] (m >= 2).
// Used where the integrand is only piecewise smooth (fitted step functions)
// and where a *pinned* grid matters more than adaptivity.
double trapezoid(const std::function<double(double)>& f, double a, double b,
                 int m);

}  // namespace iflab
