#include "iflab/gateaux.hpp"

#include <string>

namespace iflab {

namespace {

// (1-eps) P + eps delta_z for any signed eps. Negative eps walks the path
// backwards: (1+|eps|) P - |eps| delta_z. Callers must ensure validity.
DiscreteDist mix(const DiscreteDist& p, std::size_t zi, double eps) {
  std::vector<double> m(p.masses());
  for (double& v : m) v *= (1.0 - eps);
  m[zi] += eps;
  if (m[zi] < 0.0) m[zi] = 0.0;  // guards fp dust only; validity checked upstream
  return DiscreteDist::from_raw(p.schema(), std::move(m), false);
}

double eval_or_fail(const FunctionalEvaluator& psi, const DiscreteDist& d,
                    double eps) {
  try {
    return psi(d);
  } catch (const Error& e) {
    fail(Errc::EvalFailure,
         "functional evaluation failed at eps=" + std::to_string(eps) + " (" +
             e.what() + ")");
  } catch (const std::exception& e) {
    fail(Errc::EvalFailure,
         "functional evaluation failed at eps=" + std::to_string(eps) + " (" +
             e.what() + ")");
  }
}

}  // namespace

GateauxResult gateaux_derivative(const FunctionalEvaluator& psi,
                                 const DiscreteDist& p, const Atom& z,
                                 double step) {
  if (!(step > 0.0 && step <= 1e-2))
    fail(Errc::StepOutOfRange, "step must lie in (0, 1e-2]");
  std::size_t zi = p.flat_index(z);
  double pz = p.mass_at(zi);

  auto f = [&](double eps) { return eval_or_fail(psi, mix(p, zi, eps), eps); };

  // Negative side (1+h) P - h delta_z stays a distribution iff
  // p(z) >= h / (1+h); the h/2 evaluation is then valid as well.
  if (pz * (1.0 + step) >= step) {
    auto central = [&](double h) { return (f(h) - f(-h)) / (2.0 * h); };
    double d1 = central(step);
    double d2 = central(0.5 * step);
    return {(4.0 * d2 - d1) / 3.0, DiffScheme::RichardsonCentral};
  }

  // One-sided second-order forward difference at eps = 0.
  double f0 = eval_or_fail(psi, p, 0.0);
  double value = (-3.0 * f0 + 4.0 * f(step) - f(2.0 * step)) / (2.0 * step);
  return {value, DiffScheme::OneSidedForward};
}

}  // namespace iflab
