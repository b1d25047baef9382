#include "iflab/quadrature.hpp"

#include <cmath>

#include "iflab/error.hpp"

namespace iflab {

namespace {

double simpson(double fa, double fm, double fb, double h6) {
  return h6 * (fa + 4.0 * fm + fb);
}

double adapt(const std::function<double(double)>& f, double a, double b,
             double fa, double fm, double fb, double whole, double tol,
             int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(fa, flm, fm, (m - a) / 6.0);
  double right = simpson(fm, frm, fb, (b - m) / 6.0);
  double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0)
    fail(Errc::QuadratureFailure, "adaptive Simpson did not converge");
  return adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth) {
  if (!(a < b)) {
    if (a == b) return 0.0;
    fail(Errc::QuadratureFailure, "empty interval");
  }
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = simpson(fa, fm, fb, (b - a) / 6.0);
  return adapt(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

double trapezoid(const std::function<double(double)>& f, double a, double b,
                 int m) {
  if (m < 2) fail(Errc::QuadratureFailure, "trapezoid needs >= 2 points");
  double h = (b - a) / (m - 1);
  double acc = 0.5 * (f(a) + f(b));
  for (int i = 1; i + 1 < m; ++i) acc += f(a + h * i);
  return acc * h;
}

}  // namespace iflab
