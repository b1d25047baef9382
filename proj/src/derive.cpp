#include "iflab/derive.hpp"

#include "iflab/error.hpp"

namespace iflab {

namespace {

struct Rule {
  ExprPtr replacement;
  const char* name;
};

// The derivative of one node, children left as pending IF(...) markers.
Rule step_rule(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Const:
    case NodeKind::BoundRef:
      return {cnum(0.0), "constant"};
    case NodeKind::Add:
      return {add(if_of(e->a), if_of(e->b)), "linearity"};
    case NodeKind::Sub:
      return {sub(if_of(e->a), if_of(e->b)), "linearity"};
    case NodeKind::SumOver:
      return {sum_over(e->name, if_of(e->a)), "linearity"};
    case NodeKind::Mul:
      return {add(mul(if_of(e->a), e->b), mul(e->a, if_of(e->b))), "product-rule"};
    case NodeKind::Div:
      return {sub(div_(if_of(e->a), e->b), mul(div_(e->a, e->b), div_(if_of(e->b), e->b))),
              "quotient-rule"};
    case NodeKind::Apply: {
      ExprPtr fprime;
      switch (e->fn) {
        case Fn::Log: fprime = div_(cnum(1.0), e->a); break;
        case Fn::Square: fprime = mul(cnum(2.0), e->a); break;
        case Fn::Reciprocal:
          fprime = mul(cnum(-1.0), div_(cnum(1.0), mul(e->a, e->a)));
          break;
      }
      return {mul(fprime, if_of(e->a)), "chain-rule"};
    }
    case NodeKind::Mass:
      return {sub(indicator(e->assigns), mass(e->assigns)), "mass-block"};
    case NodeKind::CondExp: {
      // lifted g: same subtree; its data references now bind to the
      // observation instead of the integrated atom
      if (e->assigns.empty()) return {sub(e->a, e), "condexp-block"};
      return {mul(div_(indicator(e->assigns), mass(e->assigns)), sub(e->a, e)),
              "condexp-block"};
    }
    case NodeKind::DataRef:
    case NodeKind::Indicator:
    case NodeKind::CondMass:
    case NodeKind::PsiRef:
    case NodeKind::IfOf:
      fail(Errc::UnsupportedNode,
           "no derivative rule for node in '" + render(e) + "'");
  }
  fail(Errc::UnsupportedNode, "unknown node kind");
}

// Rewrites the outermost-leftmost pending marker; null when none remain.
ExprPtr rewrite_one(const ExprPtr& e, std::string* rule) {
  if (!e) return nullptr;
  if (e->kind == NodeKind::IfOf) {
    Rule r = step_rule(e->a);
    *rule = r.name;
    return r.replacement;
  }
  if (ExprPtr na = rewrite_one(e->a, rule)) {
    Expr out = *e;
    out.a = na;
    return std::make_shared<const Expr>(std::move(out));
  }
  if (ExprPtr nb = rewrite_one(e->b, rule)) {
    Expr out = *e;
    out.b = nb;
    return std::make_shared<const Expr>(std::move(out));
  }
  return nullptr;
}

}  // namespace

Derivation derive_if(const FunctionalExpr& f) {
  if (!f.root) fail(Errc::UnsupportedNode, "empty functional");
  ExprPtr cur = if_of(f.root);
  DerivationTrace tr;
  while (true) {
    std::string rule;
    ExprPtr next = rewrite_one(cur, &rule);
    if (!next) break;
    tr.steps.push_back({rule, render(cur), render(next)});
    cur = next;
  }
  InfluenceExpr raw{cur, f.root};
  InfluenceExpr simplified = simplify(raw, &tr);
  return {std::move(simplified), std::move(tr)};
}

}  // namespace iflab
