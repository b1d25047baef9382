#pragma once
#include <string>
#include <vector>

#include "iflab/expr.hpp"

namespace iflab {

// One rewrite: `rule` names what fired, before/after are full renders of the
// whole expression state, so consecutive steps chain (steps[i].after ==
// steps[i+1].before) and the derivation can be replayed by eye or by test.
struct TraceStep {
  std::string rule;
  std::string before;
  std::string after;
};

struct DerivationTrace {
  std::vector<TraceStep> steps;
};

struct Derivation {
  InfluenceExpr influence;
  DerivationTrace trace;
};

// Symbolic influence function of a functional over discrete distributions.
// The engine wraps the input in a pending-derivative marker and rewrites
// outermost-leftmost until no marker remains:
//   constants (and bound variables)            -> 0
//   sums, finite sums over levels              -> termwise
//   products                                   -> IF(a) b + a IF(b)
//   quotients                                  -> IF(a)/b - (a/b) IF(b)/b
//   smooth scalar functions f                  -> f'(inner) IF(inner)
//   p(v)                                       -> 1(V=v) - p(v)
//   E[g | V=v]                                 -> 1(V=v)/p(V=v) (g - E[g|V=v])
//   E[g]                                       -> g - E[g]
// followed by algebraic simplification and recognition of the original
// functional as the symbol psi.
Derivation derive_if(const FunctionalExpr& f);

// Algebraic cleanup: distributes products over sums where indicators or
// masses are involved, collapses sum_v f(v) 1(V=v) to f(V), cancels and
// rewrites mass ratios into conditional masses, folds constants, collects
// like terms, and substitutes psi for copies of the original functional.
// Idempotent; sums whose indicators do not bind the summation variable by
// name are left in place (still evaluable).
InfluenceExpr simplify(const InfluenceExpr& e, DerivationTrace* trace = nullptr);

}  // namespace iflab
