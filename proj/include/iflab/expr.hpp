#pragma once
#include <memory>
#include <string>
#include <vector>

namespace iflab {

// One shared node type covers both statistical functionals and influence
// expressions. Parsed functionals never contain DataRef / Indicator /
// CondMass / PsiRef / IfOf; those appear through derivation and
// simplification. Keeping one type makes the rewrite rules closed.
enum class NodeKind {
  Const,      // numeric literal
  BoundRef,   // bound summation variable used as a number (its level)
  DataRef,    // observed component of z, used as a number (its level)
  Mass,       // p(assigns), joint probability
  CondMass,   // p(target | given), formed by the simplifier
  CondExp,    // E[ g | assigns ]; empty assigns is the marginal expectation
  Indicator,  // 1(assigns), product of equality indicators
  SumOver,    // sum over the levels of one schema variable
  Add,
  Sub,
  Mul,
  Div,
  Apply,      // named smooth scalar function
  PsiRef,     // the value of the original functional (kept symbolic)
  IfOf,       // pending influence-function application; rewriting removes it
};

enum class ArgKind { Level, Bound, Data };

// Right-hand side of `var = ...` inside p(...), E[...|...], 1(...).
struct Arg {
  ArgKind kind = ArgKind::Level;
  int level = 0;      // Level
  std::string name;   // Bound / Data
  bool operator==(const Arg&) const = default;
};

struct Assign {
  std::string var;
  Arg arg;
  bool operator==(const Assign&) const = default;
};

enum class Fn { Log, Square, Reciprocal };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  NodeKind kind = NodeKind::Const;
  double value = 0.0;           // Const
  std::string name;             // BoundRef/DataRef variable; SumOver bound var
  std::vector<Assign> assigns;  // Mass/Indicator/CondExp conditioning/CondMass target
  std::vector<Assign> given;    // CondMass conditioning set
  ExprPtr a, b;                 // children; unary nodes use a
  Fn fn = Fn::Log;              // Apply
};

ExprPtr cnum(double v);
ExprPtr bref(std::string name);
ExprPtr dref(std::string name);
ExprPtr mass(std::vector<Assign> assigns);
ExprPtr cond_mass(std::vector<Assign> target, std::vector<Assign> given);
ExprPtr cond_exp(ExprPtr g, std::vector<Assign> given);
ExprPtr indicator(std::vector<Assign> assigns);
ExprPtr sum_over(std::string var, ExprPtr body);
ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr mul(ExprPtr a, ExprPtr b);
ExprPtr div_(ExprPtr a, ExprPtr b);
ExprPtr apply(Fn fn, ExprPtr a);
ExprPtr psi_ref();
ExprPtr if_of(ExprPtr a);

// Canonical string key: total order for sorting factors/terms and the
// structural-equality predicate (assignment lists compare order-free).
std::string expr_key(const ExprPtr& e);
bool expr_equal(const ExprPtr& a, const ExprPtr& b);

// Human-readable surface form, close to the input grammar. Data references
// render uppercase (Y, X2), the functional value renders as `psi`.
std::string render(const ExprPtr& e);
std::string render_number(double v);

// True if any node in the subtree satisfies pred.
bool expr_contains(const ExprPtr& e, NodeKind kind);

// Replace a bound variable by another argument (level or data reference)
// everywhere it occurs: value positions and assignment right-hand sides.
ExprPtr substitute_bound(const ExprPtr& e, const std::string& bound, const Arg& with);

// A statistical functional: a parsed expression with no data references.
struct FunctionalExpr {
  ExprPtr root;
};

// An influence expression. `functional` backs the PsiRef symbol; it is null
// only for hand-built expressions that never mention psi.
struct InfluenceExpr {
  ExprPtr root;
  ExprPtr functional;
};

}  // namespace iflab
