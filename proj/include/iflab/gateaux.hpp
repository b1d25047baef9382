#pragma once
#include <functional>

#include "iflab/dist.hpp"

namespace iflab {

using FunctionalEvaluator = std::function<double(const DiscreteDist&)>;

enum class DiffScheme {
  RichardsonCentral,  // (4 D(h/2) - D(h)) / 3 on a signed contamination path
  OneSidedForward,    // second-order forward difference, used when the
                      // negative-eps side would need more mass at z than P has
};

struct GateauxResult {
  double value;
  DiffScheme scheme;
};

// Numerical pathwise derivative of psi at P along the point-mass direction
// delta_z: d/d eps psi((1-eps) P + eps delta_z) at eps = 0. This is the
// model-free oracle that symbolic influence functions are checked against.
//
// step must lie in (0, 1e-2]; the default 1e-4 gives ~1e-9 accuracy for
// polynomial functionals under Richardson extrapolation. Failures inside
// psi are rethrown as EvalFailure.
GateauxResult gateaux_derivative(const FunctionalEvaluator& psi,
                                 const DiscreteDist& p, const Atom& z,
                                 double step = 1e-4);

}  // namespace iflab
