#pragma once
#include <string>
#include <vector>

#include "iflab/dist.hpp"
#include "iflab/expr.hpp"

namespace iflab {

// Exact evaluation of a functional on a discrete distribution.
double evaluate_functional(const FunctionalExpr& f, const DiscreteDist& p);

// Evaluation of an influence expression at observation z. PsiRef resolves to
// evaluate_functional of the embedded functional (computed once per call).
double evaluate_if(const InfluenceExpr& e, const DiscreteDist& p, const Atom& z);

struct CheckRow {
  Atom z;
  double symbolic;
  double oracle;
  double gap;
};

struct CheckReport {
  bool pass = false;
  double tol = 0.0;
  double max_gap = 0.0;
  double mean_zero_residual = 0.0;
  std::string influence;  // rendered derived influence function
  std::vector<CheckRow> rows;
};

// Derives the influence function symbolically, then compares it at every
// atom with the numerical pathwise derivative of the evaluated functional,
// and checks that the symbolic values are mean zero under p. Passes iff the
// worst atom gap and the mean-zero residual are both within tol.
CheckReport check_if(const FunctionalExpr& f, const DiscreteDist& p, double tol = 1e-6);

}  // namespace iflab
