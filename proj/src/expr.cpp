#include "iflab/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "iflab/error.hpp"

namespace iflab {

namespace {

ExprPtr node(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

}  // namespace

ExprPtr cnum(double v) {
  Expr e;
  e.kind = NodeKind::Const;
  e.value = v;
  return node(std::move(e));
}

ExprPtr bref(std::string name) {
  Expr e;
  e.kind = NodeKind::BoundRef;
  e.name = std::move(name);
  return node(std::move(e));
}

ExprPtr dref(std::string name) {
  Expr e;
  e.kind = NodeKind::DataRef;
  e.name = std::move(name);
  return node(std::move(e));
}

ExprPtr mass(std::vector<Assign> assigns) {
  Expr e;
  e.kind = NodeKind::Mass;
  e.assigns = std::move(assigns);
  return node(std::move(e));
}

ExprPtr cond_mass(std::vector<Assign> target, std::vector<Assign> given) {
  Expr e;
  e.kind = NodeKind::CondMass;
  e.assigns = std::move(target);
  e.given = std::move(given);
  return node(std::move(e));
}

ExprPtr cond_exp(ExprPtr g, std::vector<Assign> given) {
  Expr e;
  e.kind = NodeKind::CondExp;
  e.a = std::move(g);
  e.assigns = std::move(given);
  return node(std::move(e));
}

ExprPtr indicator(std::vector<Assign> assigns) {
  Expr e;
  e.kind = NodeKind::Indicator;
  e.assigns = std::move(assigns);
  return node(std::move(e));
}

ExprPtr sum_over(std::string var, ExprPtr body) {
  Expr e;
  e.kind = NodeKind::SumOver;
  e.name = std::move(var);
  e.a = std::move(body);
  return node(std::move(e));
}

namespace {
ExprPtr binary(NodeKind k, ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = k;
  e.a = std::move(a);
  e.b = std::move(b);
  return node(std::move(e));
}
}  // namespace

ExprPtr add(ExprPtr a, ExprPtr b) { return binary(NodeKind::Add, std::move(a), std::move(b)); }
ExprPtr sub(ExprPtr a, ExprPtr b) { return binary(NodeKind::Sub, std::move(a), std::move(b)); }
ExprPtr mul(ExprPtr a, ExprPtr b) { return binary(NodeKind::Mul, std::move(a), std::move(b)); }
ExprPtr div_(ExprPtr a, ExprPtr b) { return binary(NodeKind::Div, std::move(a), std::move(b)); }

ExprPtr apply(Fn fn, ExprPtr a) {
  Expr e;
  e.kind = NodeKind::Apply;
  e.fn = fn;
  e.a = std::move(a);
  return node(std::move(e));
}

ExprPtr psi_ref() {
  Expr e;
  e.kind = NodeKind::PsiRef;
  return node(std::move(e));
}

ExprPtr if_of(ExprPtr a) {
  Expr e;
  e.kind = NodeKind::IfOf;
  e.a = std::move(a);
  return node(std::move(e));
}

std::string render_number(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string upper(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string arg_str(const Arg& a) {
  switch (a.kind) {
    case ArgKind::Level: return std::to_string(a.level);
    case ArgKind::Bound: return a.name;
    case ArgKind::Data: return upper(a.name);
  }
  return "?";
}

std::string assigns_str(const std::vector<Assign>& as) {
  std::string out;
  for (std::size_t i = 0; i < as.size(); ++i) {
    if (i) out += ", ";
    out += as[i].var + "=" + arg_str(as[i].arg);
  }
  return out;
}

// canonical: order-free over assignment entries
std::string assigns_key(const std::vector<Assign>& as) {
  std::vector<std::string> parts;
  for (auto& a : as) parts.push_back(a.var + "=" + arg_str(a.arg));
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (auto& p : parts) out += p + ";";
  return out;
}

int precedence(NodeKind k) {
  switch (k) {
    case NodeKind::Add:
    case NodeKind::Sub: return 1;
    case NodeKind::Mul:
    case NodeKind::Div: return 2;
    default: return 3;
  }
}

std::string render_prec(const ExprPtr& e, int parent_prec, bool in_exp);

// DataRefs render uppercase when they denote the observed value of a
// variable, but keep their lowercase name inside E[...], where they name
// the variable being averaged.
std::string render_core(const ExprPtr& e, bool in_exp) {
  switch (e->kind) {
    case NodeKind::Const: return render_number(e->value);
    case NodeKind::BoundRef: return e->name;
    case NodeKind::DataRef: return in_exp ? e->name : upper(e->name);
    case NodeKind::Mass: return "p(" + assigns_str(e->assigns) + ")";
    case NodeKind::CondMass:
      return "p(" + assigns_str(e->assigns) + " | " + assigns_str(e->given) + ")";
    case NodeKind::CondExp:
      if (e->assigns.empty()) return "E[" + render_prec(e->a, 0, true) + "]";
      return "E[" + render_prec(e->a, 0, true) + " | " + assigns_str(e->assigns) + "]";
    case NodeKind::Indicator: return "1(" + assigns_str(e->assigns) + ")";
    case NodeKind::SumOver:
      return "sum_" + e->name + " { " + render_prec(e->a, 0, in_exp) + " }";
    case NodeKind::Add:
      return render_prec(e->a, 1, in_exp) + " + " + render_prec(e->b, 2, in_exp);
    case NodeKind::Sub:
      return render_prec(e->a, 1, in_exp) + " - " + render_prec(e->b, 2, in_exp);
    case NodeKind::Mul:
      return render_prec(e->a, 2, in_exp) + " * " + render_prec(e->b, 3, in_exp);
    case NodeKind::Div:
      return render_prec(e->a, 2, in_exp) + " / " + render_prec(e->b, 3, in_exp);
    case NodeKind::Apply: {
      const char* n = e->fn == Fn::Log ? "log" : e->fn == Fn::Square ? "square" : "recip";
      return std::string(n) + "(" + render_prec(e->a, 0, in_exp) + ")";
    }
    case NodeKind::PsiRef: return "psi";
    case NodeKind::IfOf: return "IF(" + render_prec(e->a, 0, in_exp) + ")";
  }
  return "?";
}

std::string render_prec(const ExprPtr& e, int parent_prec, bool in_exp) {
  std::string s = render_core(e, in_exp);
  if (precedence(e->kind) < parent_prec) return "(" + s + ")";
  return s;
}

}  // namespace

std::string render(const ExprPtr& e) { return render_prec(e, 0, false); }

std::string expr_key(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Const: return "C:" + render_number(e->value);
    case NodeKind::BoundRef: return "B:" + e->name;
    case NodeKind::DataRef: return "D:" + e->name;
    case NodeKind::Mass: return "P(" + assigns_key(e->assigns) + ")";
    case NodeKind::CondMass:
      return "CP(" + assigns_key(e->assigns) + "|" + assigns_key(e->given) + ")";
    case NodeKind::CondExp:
      return "E(" + expr_key(e->a) + "|" + assigns_key(e->assigns) + ")";
    case NodeKind::Indicator: return "I(" + assigns_key(e->assigns) + ")";
    case NodeKind::SumOver: return "S[" + e->name + "](" + expr_key(e->a) + ")";
    case NodeKind::Add: return "(+ " + expr_key(e->a) + " " + expr_key(e->b) + ")";
    case NodeKind::Sub: return "(- " + expr_key(e->a) + " " + expr_key(e->b) + ")";
    case NodeKind::Mul: return "(* " + expr_key(e->a) + " " + expr_key(e->b) + ")";
    case NodeKind::Div: return "(/ " + expr_key(e->a) + " " + expr_key(e->b) + ")";
    case NodeKind::Apply:
      return "F" + std::to_string(static_cast<int>(e->fn)) + "(" + expr_key(e->a) + ")";
    case NodeKind::PsiRef: return "PSI";
    case NodeKind::IfOf: return "IF(" + expr_key(e->a) + ")";
  }
  return "?";
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return expr_key(a) == expr_key(b);
}

bool expr_contains(const ExprPtr& e, NodeKind kind) {
  if (!e) return false;
  if (e->kind == kind) return true;
  return expr_contains(e->a, kind) || expr_contains(e->b, kind);
}

ExprPtr substitute_bound(const ExprPtr& e, const std::string& bound, const Arg& with) {
  if (!e) return e;
  auto subst_assigns = [&](const std::vector<Assign>& as) {
    std::vector<Assign> out = as;
    for (auto& x : out)
      if (x.arg.kind == ArgKind::Bound && x.arg.name == bound) x.arg = with;
    return out;
  };
  Expr out = *e;
  switch (e->kind) {
    case NodeKind::BoundRef:
      if (e->name == bound) {
        if (with.kind == ArgKind::Level) return cnum(double(with.level));
        if (with.kind == ArgKind::Data) return dref(with.name);
        return bref(with.name);
      }
      return e;
    case NodeKind::SumOver:
      if (e->name == bound) return e;  // shadowed; parser forbids, stay safe
      out.a = substitute_bound(e->a, bound, with);
      break;
    default:
      out.assigns = subst_assigns(e->assigns);
      out.given = subst_assigns(e->given);
      out.a = substitute_bound(e->a, bound, with);
      out.b = substitute_bound(e->b, bound, with);
      break;
  }
  return std::make_shared<const Expr>(std::move(out));
}

}  // namespace iflab
