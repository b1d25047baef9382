#include "iflab/eval.hpp"

#include <cmath>

#include "iflab/derive.hpp"
#include "iflab/error.hpp"
#include "iflab/gateaux.hpp"

namespace iflab {

namespace {

struct Ctx {
  const DiscreteDist& dist;
  std::vector<std::pair<std::string, int>> env;  // bound variable -> level
  const Atom* data = nullptr;                    // current observation
  const double* psi = nullptr;                   // value backing PsiRef
};

int env_lookup(const Ctx& c, const std::string& name) {
  for (auto it = c.env.rbegin(); it != c.env.rend(); ++it)
    if (it->first == name) return it->second;
  fail(Errc::UnboundVariable, "bound variable '" + name + "' has no value");
}

int resolve_arg(const Ctx& c, const Arg& a) {
  switch (a.kind) {
    case ArgKind::Level: return a.level;
    case ArgKind::Bound: return env_lookup(c, a.name);
    case ArgKind::Data: {
      if (!c.data)
        fail(Errc::UnboundVariable,
             "data reference '" + a.name + "' outside influence evaluation");
      int idx = c.dist.schema().index_of(a.name);
      return (*c.data)[static_cast<std::size_t>(idx)];
    }
  }
  fail(Errc::UnsupportedNode, "bad argument kind");
}

// resolved (variable index, level) pairs for a conditioning set
std::vector<std::pair<int, int>> resolve_assigns(const Ctx& c,
                                                 const std::vector<Assign>& as) {
  std::vector<std::pair<int, int>> out;
  for (auto& a : as) {
    int vi = c.dist.schema().index_of(a.var);
    int lvl = resolve_arg(c, a.arg);
    if (lvl < 0 || lvl >= c.dist.schema().vars[vi].levels)
      fail(Errc::InvalidAtom, "level out of range for '" + a.var + "'");
    out.push_back({vi, lvl});
  }
  return out;
}

bool atom_matches(const Atom& atom, const std::vector<std::pair<int, int>>& cond) {
  for (auto& [vi, lvl] : cond)
    if (atom[static_cast<std::size_t>(vi)] != lvl) return false;
  return true;
}

double eval(const ExprPtr& e, Ctx& c);

double eval_mass(const std::vector<std::pair<int, int>>& cond, const Ctx& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.dist.size(); ++i) {
    double m = c.dist.mass_at(i);
    if (m != 0.0 && atom_matches(c.dist.atom_at(i), cond)) s += m;
  }
  return s;
}

double eval(const ExprPtr& e, Ctx& c) {
  switch (e->kind) {
    case NodeKind::Const:
      return e->value;
    case NodeKind::BoundRef:
      return double(env_lookup(c, e->name));
    case NodeKind::DataRef: {
      if (!c.data)
        fail(Errc::UnboundVariable,
             "data reference '" + e->name + "' outside influence evaluation");
      int idx = c.dist.schema().index_of(e->name);
      return double((*c.data)[static_cast<std::size_t>(idx)]);
    }
    case NodeKind::Mass:
      return eval_mass(resolve_assigns(c, e->assigns), c);
    case NodeKind::CondMass: {
      auto giv = resolve_assigns(c, e->given);
      auto tgt = resolve_assigns(c, e->assigns);
      double den = eval_mass(giv, c);
      if (den == 0.0)
        fail(Errc::ZeroConditioningMass, "conditioning event has zero mass in " + render(e));
      auto joint = giv;
      joint.insert(joint.end(), tgt.begin(), tgt.end());
      return eval_mass(joint, c) / den;
    }
    case NodeKind::CondExp: {
      auto cond = resolve_assigns(c, e->assigns);
      double num = 0.0, den = 0.0;
      const Atom* saved = c.data;
      for (std::size_t i = 0; i < c.dist.size(); ++i) {
        double m = c.dist.mass_at(i);
        if (m == 0.0) continue;
        Atom a = c.dist.atom_at(i);
        if (!atom_matches(a, cond)) continue;
        c.data = &a;  // g integrates over the conditioned atoms
        num += m * eval(e->a, c);
        den += m;
      }
      c.data = saved;
      if (den == 0.0)
        fail(Errc::ZeroConditioningMass, "conditioning event has zero mass in " + render(e));
      return num / den;
    }
    case NodeKind::Indicator: {
      for (auto& a : e->assigns) {
        int vi = c.dist.schema().index_of(a.var);
        if (!c.data)
          fail(Errc::UnboundVariable, "indicator outside influence evaluation");
        if ((*c.data)[static_cast<std::size_t>(vi)] != resolve_arg(c, a.arg)) return 0.0;
      }
      return 1.0;
    }
    case NodeKind::SumOver: {
      int vi = c.dist.schema().index_of(e->name);
      int levels = c.dist.schema().vars[static_cast<std::size_t>(vi)].levels;
      double s = 0.0;
      c.env.push_back({e->name, 0});
      for (int l = 0; l < levels; ++l) {
        c.env.back().second = l;
        s += eval(e->a, c);
      }
      c.env.pop_back();
      return s;
    }
    case NodeKind::Add:
      return eval(e->a, c) + eval(e->b, c);
    case NodeKind::Sub:
      return eval(e->a, c) - eval(e->b, c);
    case NodeKind::Mul:
      return eval(e->a, c) * eval(e->b, c);
    case NodeKind::Div: {
      double den = eval(e->b, c);
      if (den == 0.0) fail(Errc::EvalFailure, "division by zero in " + render(e));
      return eval(e->a, c) / den;
    }
    case NodeKind::Apply: {
      double v = eval(e->a, c);
      switch (e->fn) {
        case Fn::Log:
          if (v <= 0.0) fail(Errc::EvalFailure, "log of a non-positive value");
          return std::log(v);
        case Fn::Square:
          return v * v;
        case Fn::Reciprocal:
          if (v == 0.0) fail(Errc::EvalFailure, "reciprocal of zero");
          return 1.0 / v;
      }
      fail(Errc::UnsupportedNode, "unknown function");
    }
    case NodeKind::PsiRef:
      if (!c.psi)
        fail(Errc::UnsupportedNode, "psi symbol without a backing functional");
      return *c.psi;
    case NodeKind::IfOf:
      fail(Errc::UnsupportedNode, "pending derivative marker in evaluation");
  }
  fail(Errc::UnsupportedNode, "unknown node kind");
}

}  // namespace

double evaluate_functional(const FunctionalExpr& f, const DiscreteDist& p) {
  if (!f.root) fail(Errc::UnsupportedNode, "empty functional");
  Ctx c{p, {}, nullptr, nullptr};
  return eval(f.root, c);
}

double evaluate_if(const InfluenceExpr& e, const DiscreteDist& p, const Atom& z) {
  if (!e.root) fail(Errc::UnsupportedNode, "empty influence expression");
  // touch the atom early so malformed z errors out before evaluation
  (void)p.flat_index(z);
  double psi = 0.0;
  bool needs_psi = expr_contains(e.root, NodeKind::PsiRef);
  if (needs_psi) {
    if (!e.functional)
      fail(Errc::UnsupportedNode, "psi symbol without a backing functional");
    psi = evaluate_functional(FunctionalExpr{e.functional}, p);
  }
  Ctx c{p, {}, &z, needs_psi ? &psi : nullptr};
  return eval(e.root, c);
}

CheckReport check_if(const FunctionalExpr& f, const DiscreteDist& p, double tol) {
  Derivation d = derive_if(f);
  FunctionalEvaluator psi = [&f](const DiscreteDist& q) {
    return evaluate_functional(f, q);
  };
  CheckReport rep;
  rep.tol = tol;
  rep.influence = render(d.influence.root);
  double residual = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Atom z = p.atom_at(i);
    CheckRow row;
    row.z = z;
    row.symbolic = evaluate_if(d.influence, p, z);
    row.oracle = gateaux_derivative(psi, p, z).value;
    row.gap = std::abs(row.symbolic - row.oracle);
    rep.max_gap = std::max(rep.max_gap, row.gap);
    residual += p.mass_at(i) * row.symbolic;
    rep.rows.push_back(std::move(row));
  }
  rep.mean_zero_residual = std::abs(residual);
  rep.pass = rep.max_gap <= tol && rep.mean_zero_residual <= tol;
  return rep;
}

}  // namespace iflab
