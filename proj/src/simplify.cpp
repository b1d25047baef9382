#include <algorithm>
#include <cmath>
#include <map>

#include "iflab/derive.hpp"
#include "iflab/error.hpp"

namespace iflab {

namespace {

// Nodes that force distribution: sums containing these must be expanded so
// indicator collapses, mass cancellation and psi recognition can see them.
// Pure data arithmetic (including conditional means) stays grouped, which
// keeps residuals like (Y - E[y | x=X, a=1]) in one piece.
bool is_statistical(const ExprPtr& e) {
  return expr_contains(e, NodeKind::Mass) || expr_contains(e, NodeKind::Indicator) ||
         expr_contains(e, NodeKind::CondMass) || expr_contains(e, NodeKind::SumOver) ||
         expr_contains(e, NodeKind::PsiRef) || expr_contains(e, NodeKind::IfOf);
}

struct Factor {
  ExprPtr e;
  int exp = 1;
  std::string key;
};

struct Term {
  double coef = 1.0;
  std::vector<Factor> fs;
};

using Terms = std::vector<Term>;

int factor_priority(const ExprPtr& e) {
  if (e->kind == NodeKind::Indicator) return 0;
  if (e->kind == NodeKind::Add || e->kind == NodeKind::Sub) return 2;  // grouped residual
  return 1;
}

void sort_factors(Term& t) {
  std::stable_sort(t.fs.begin(), t.fs.end(), [](const Factor& x, const Factor& y) {
    int px = factor_priority(x.e), py = factor_priority(y.e);
    if (px != py) return px < py;
    if (x.key != y.key) return x.key < y.key;
    return x.exp > y.exp;
  });
}

std::string term_key(const Term& t) {
  std::string k;
  for (auto& f : t.fs) k += f.key + "^" + std::to_string(f.exp) + "|";
  return k;
}

std::string arg_canon(const Arg& a) {
  switch (a.kind) {
    case ArgKind::Level: return "#" + std::to_string(a.level);
    case ArgKind::Bound: return "b:" + a.name;
    case ArgKind::Data: return "d:" + a.name;
  }
  return "?";
}

std::vector<std::string> entry_strings(const std::vector<Assign>& as) {
  std::vector<std::string> out;
  for (auto& a : as) out.push_back(a.var + "=" + arg_canon(a.arg));
  std::sort(out.begin(), out.end());
  return out;
}

// strict subset of assignment entries
bool assign_subset(const std::vector<Assign>& small, const std::vector<Assign>& big) {
  if (small.size() >= big.size()) return false;
  auto s = entry_strings(small), b = entry_strings(big);
  return std::includes(b.begin(), b.end(), s.begin(), s.end());
}

std::vector<Assign> assign_difference(const std::vector<Assign>& big,
                                      const std::vector<Assign>& small) {
  auto s = entry_strings(small);
  std::vector<Assign> out;
  for (auto& a : big) {
    std::string k = a.var + "=" + arg_canon(a.arg);
    if (!std::binary_search(s.begin(), s.end(), k)) out.push_back(a);
  }
  return out;
}

// Drops 1(U=U) tautologies (a data reference compared with its own
// variable); empty indicators vanish entirely.
std::vector<Assign> cleaned_indicator(const std::vector<Assign>& as) {
  std::vector<Assign> out;
  for (auto& a : as) {
    if (a.arg.kind == ArgKind::Data && a.arg.name == a.var) continue;
    out.push_back(a);
  }
  return out;
}

void push_factor(Term& t, const ExprPtr& e, int exp) {
  if (e->kind == NodeKind::Const) {
    t.coef = exp > 0 ? t.coef * e->value : t.coef / e->value;
    return;
  }
  if (e->kind == NodeKind::Indicator) {
    auto as = cleaned_indicator(e->assigns);
    if (as.empty()) return;
    ExprPtr ind = indicator(std::move(as));
    t.fs.push_back({ind, exp, expr_key(ind)});
    return;
  }
  if (e->kind == NodeKind::Mass && e->assigns.empty()) return;  // p() == 1
  t.fs.push_back({e, exp, expr_key(e)});
}

// indicator union, duplicate-entry free
void merge_indicators(Term& t) {
  std::vector<Assign> merged;
  std::vector<Factor> rest;
  int count = 0;
  for (auto& f : t.fs) {
    if (f.e->kind == NodeKind::Indicator && f.exp == 1) {
      ++count;
      for (auto& a : f.e->assigns) {
        bool dup = false;
        for (auto& m : merged)
          if (m.var == a.var && m.arg == a.arg) dup = true;
        if (!dup) merged.push_back(a);
      }
    } else {
      rest.push_back(f);
    }
  }
  if (count == 0) return;
  t.fs = std::move(rest);
  auto as = cleaned_indicator(merged);
  if (!as.empty()) {
    ExprPtr ind = indicator(std::move(as));
    t.fs.push_back({ind, 1, expr_key(ind)});
  }
}

// exact-key cancellation: net exponents, zero nets vanish
void cancel_factors(Term& t) {
  std::map<std::string, std::pair<ExprPtr, int>> net;
  std::vector<std::string> order;
  for (auto& f : t.fs) {
    auto it = net.find(f.key);
    if (it == net.end()) {
      net[f.key] = {f.e, f.exp};
      order.push_back(f.key);
    } else {
      it->second.second += f.exp;
    }
  }
  t.fs.clear();
  for (auto& k : order) {
    auto& [e, exp] = net[k];
    if (exp != 0) t.fs.push_back({e, exp, k});
  }
}

// p(S)/p(T) with S strictly inside T becomes 1/p(T\S | S), and p(T)/p(S)
// becomes p(T\S | S). Repeats until no mass pair qualifies.
void form_conditional_masses(Term& t) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < t.fs.size() && !changed; ++i) {
      if (t.fs[i].e->kind != NodeKind::Mass || t.fs[i].exp <= 0) continue;
      for (std::size_t j = 0; j < t.fs.size() && !changed; ++j) {
        if (t.fs[j].e->kind != NodeKind::Mass || t.fs[j].exp >= 0) continue;
        const auto& up = t.fs[i].e->assigns;    // numerator mass
        const auto& down = t.fs[j].e->assigns;  // denominator mass
        ExprPtr cm;
        int cm_exp = 0;
        if (assign_subset(up, down)) {
          cm = cond_mass(assign_difference(down, up), up);
          cm_exp = -1;
        } else if (assign_subset(down, up)) {
          cm = cond_mass(assign_difference(up, down), down);
          cm_exp = 1;
        } else {
          continue;
        }
        // consume one power from each side, then add the conditional mass
        t.fs[i].exp -= 1;
        t.fs[j].exp += 1;
        std::vector<Factor> kept;
        for (auto& f : t.fs)
          if (f.exp != 0) kept.push_back(f);
        kept.push_back({cm, cm_exp, expr_key(cm)});
        t.fs = std::move(kept);
        cancel_factors(t);
        changed = true;
      }
    }
  }
}

void finish_term(Term& t) {
  merge_indicators(t);
  cancel_factors(t);
  form_conditional_masses(t);
  sort_factors(t);
}

Terms neg(Terms ts) {
  for (auto& t : ts) t.coef = -t.coef;
  return ts;
}

Terms mul_terms(const Terms& A, const Terms& B) {
  Terms out;
  for (auto& a : A)
    for (auto& b : B) {
      Term t;
      t.coef = a.coef * b.coef;
      t.fs = a.fs;
      t.fs.insert(t.fs.end(), b.fs.begin(), b.fs.end());
      finish_term(t);
      out.push_back(std::move(t));
    }
  return out;
}

void collect(Terms& ts) {
  std::map<std::string, std::size_t> pos;
  Terms out;
  for (auto& t : ts) {
    std::string k = term_key(t);
    auto it = pos.find(k);
    if (it == pos.end()) {
      pos[k] = out.size();
      out.push_back(t);
    } else {
      out[it->second].coef += t.coef;
    }
  }
  Terms nz;
  for (auto& t : out)
    if (t.coef != 0.0) nz.push_back(std::move(t));
  ts = std::move(nz);
}

ExprPtr rebuild_terms(const Terms& ts);

ExprPtr rebuild_term_expr(const Term& t, bool with_abs_coef) {
  std::vector<ExprPtr> num, den;
  double c = std::abs(t.coef);
  if (with_abs_coef && c != 1.0) num.push_back(cnum(c));
  for (auto& f : t.fs) {
    for (int k = 0; k < std::abs(f.exp); ++k)
      (f.exp > 0 ? num : den).push_back(f.e);
  }
  ExprPtr top;
  for (auto& e : num) top = top ? mul(top, e) : e;
  if (!top) top = cnum(1.0);
  ExprPtr bottom;
  for (auto& e : den) bottom = bottom ? mul(bottom, e) : e;
  return bottom ? div_(top, bottom) : top;
}

bool term_has_psi(const Term& t) {
  for (auto& f : t.fs)
    if (expr_contains(f.e, NodeKind::PsiRef)) return true;
  return false;
}

ExprPtr rebuild_terms(const Terms& ts) {
  if (ts.empty()) return cnum(0.0);
  std::vector<const Term*> order;
  for (auto& t : ts) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const Term* x, const Term* y) {
    bool px = term_has_psi(*x), py = term_has_psi(*y);
    if (px != py) return !px;  // psi terms last, as in the usual display
    return term_key(*x) > term_key(*y);
  });
  ExprPtr out;
  for (const Term* t : order) {
    ExprPtr te = rebuild_term_expr(*t, true);
    if (!out) {
      out = t->coef < 0.0 ? mul(cnum(-1.0), te) : te;
    } else {
      out = t->coef < 0.0 ? sub(out, te) : add(out, te);
    }
  }
  return out;
}

Terms norm(const ExprPtr& e);

// canonical rebuild of a subtree (used for grouped residuals, conditional
// expectation bodies and function arguments)
ExprPtr canonical(const ExprPtr& e) {
  Terms ts = norm(e);
  collect(ts);
  return rebuild_terms(ts);
}

// A multiplication/division side: non-statistical sums stay opaque.
Terms norm_side(const ExprPtr& e) {
  if ((e->kind == NodeKind::Add || e->kind == NodeKind::Sub) && !is_statistical(e)) {
    ExprPtr grp = canonical(e);
    if (grp->kind == NodeKind::Add || grp->kind == NodeKind::Sub) {
      Term t;
      push_factor(t, grp, 1);
      return {std::move(t)};
    }
    // degenerated to a single term while canonicalizing; fall through
    return norm(grp);
  }
  return norm(e);
}

bool references_bound_var(const ExprPtr& e, const std::string& v) {
  if (!e) return false;
  if (e->kind == NodeKind::BoundRef && e->name == v) return true;
  if (e->kind == NodeKind::SumOver && e->name == v) return false;
  for (auto& a : e->assigns)
    if (a.arg.kind == ArgKind::Bound && a.arg.name == v) return true;
  for (auto& a : e->given)
    if (a.arg.kind == ArgKind::Bound && a.arg.name == v) return true;
  return references_bound_var(e->a, v) || references_bound_var(e->b, v);
}

Terms norm_sum_over(const std::string& v, const ExprPtr& body) {
  Terms bt = norm(body);
  collect(bt);
  Terms out;
  for (auto& t : bt) {
    // look for an indicator entry 1(..., v = v, ...) that pins the bound
    // variable to the same-named observed variable
    int fi = -1, ei = -1;
    for (std::size_t i = 0; i < t.fs.size() && fi < 0; ++i) {
      if (t.fs[i].e->kind != NodeKind::Indicator || t.fs[i].exp != 1) continue;
      auto& as = t.fs[i].e->assigns;
      for (std::size_t j = 0; j < as.size(); ++j) {
        if (as[j].var == v && as[j].arg.kind == ArgKind::Bound && as[j].arg.name == v) {
          fi = static_cast<int>(i);
          ei = static_cast<int>(j);
          break;
        }
      }
    }
    if (fi >= 0) {
      // the sum collapses onto the observed level: drop the pinned entry,
      // then replace the bound variable by a data reference everywhere
      Term t2 = t;
      std::vector<Assign> as = t2.fs[fi].e->assigns;
      as.erase(as.begin() + ei);
      if (as.empty()) {
        t2.fs.erase(t2.fs.begin() + fi);
      } else {
        ExprPtr ind = indicator(std::move(as));
        t2.fs[fi] = {ind, 1, expr_key(ind)};
      }
      ExprPtr te = rebuild_term_expr(t2, false);
      Arg with;
      with.kind = ArgKind::Data;
      with.name = v;
      ExprPtr replaced = substitute_bound(te, v, with);
      Terms rt = norm(replaced);
      for (auto& r : rt) {
        r.coef *= t2.coef;
        out.push_back(std::move(r));
      }
    } else {
      // no collapse: hoist the coefficient, keep the sum intact
      Term body_term = t;
      body_term.coef = 1.0;
      Term wrapped;
      wrapped.coef = t.coef;
      ExprPtr se = sum_over(v, rebuild_term_expr(body_term, true));
      wrapped.fs.push_back({se, 1, expr_key(se)});
      out.push_back(std::move(wrapped));
    }
  }
  return out;
}

Terms norm(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Const: {
      Term t;
      t.coef = e->value;
      return {std::move(t)};
    }
    case NodeKind::Add: {
      Terms a = norm(e->a), b = norm(e->b);
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }
    case NodeKind::Sub: {
      Terms a = norm(e->a), b = neg(norm(e->b));
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }
    case NodeKind::Mul:
      return mul_terms(norm_side(e->a), norm_side(e->b));
    case NodeKind::Div: {
      Terms a = norm_side(e->a);
      Terms b = norm_side(e->b);
      if (b.size() == 1) {
        Terms out;
        for (auto& t : a) {
          Term r = t;
          r.coef /= b[0].coef;
          for (auto& f : b[0].fs) r.fs.push_back({f.e, -f.exp, f.key});
          finish_term(r);
          out.push_back(std::move(r));
        }
        return out;
      }
      // sum in the denominator stays one opaque inverse factor
      ExprPtr grp = rebuild_terms(b);
      Terms out;
      for (auto& t : a) {
        Term r = t;
        push_factor(r, grp, -1);
        finish_term(r);
        out.push_back(std::move(r));
      }
      return out;
    }
    case NodeKind::SumOver:
      return norm_sum_over(e->name, e->a);
    case NodeKind::Apply: {
      ExprPtr body = canonical(e->a);
      if (body->kind == NodeKind::Const) {
        double v = body->value;
        double folded = e->fn == Fn::Log      ? std::log(v)
                        : e->fn == Fn::Square ? v * v
                                              : 1.0 / v;
        Term t;
        t.coef = folded;
        return {std::move(t)};
      }
      Term t;
      ExprPtr ap = apply(e->fn, body);
      t.fs.push_back({ap, 1, expr_key(ap)});
      return {std::move(t)};
    }
    case NodeKind::CondExp: {
      Term t;
      ExprPtr ce = cond_exp(canonical(e->a), e->assigns);
      t.fs.push_back({ce, 1, expr_key(ce)});
      return {std::move(t)};
    }
    case NodeKind::Mass:
    case NodeKind::Indicator: {
      Term t;
      push_factor(t, e, 1);
      return {std::move(t)};
    }
    case NodeKind::CondMass:
    case NodeKind::DataRef:
    case NodeKind::BoundRef:
    case NodeKind::PsiRef: {
      Term t;
      t.fs.push_back({e, 1, expr_key(e)});
      return {std::move(t)};
    }
    case NodeKind::IfOf:
      fail(Errc::UnsupportedNode, "pending derivative marker inside simplify");
  }
  fail(Errc::UnsupportedNode, "unknown node kind in simplify");
}

// Replace the scattered copy of the original functional by the symbol psi.
// The derived expression contains the functional's normalized terms with one
// common coefficient ratio (for plain functionals the ratio is -1); any full
// match is value-equal to c * psi by definition, so substitution is sound.
bool recognize_psi(Terms& d, const Terms& f) {
  if (f.empty()) return false;
  for (auto& t : f)
    if (term_has_psi(t)) return false;

  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < d.size(); ++i) pos[term_key(d[i])] = i;

  auto it0 = pos.find(term_key(f[0]));
  if (it0 == pos.end()) return false;
  double c = d[it0->second].coef / f[0].coef;

  std::vector<std::size_t> matched;
  for (auto& ft : f) {
    auto it = pos.find(term_key(ft));
    if (it == pos.end()) return false;
    double dc = d[it->second].coef;
    if (std::abs(dc - c * ft.coef) > 1e-12 * std::max(1.0, std::abs(dc))) return false;
    matched.push_back(it->second);
  }
  std::sort(matched.begin(), matched.end());
  for (std::size_t i = matched.size(); i-- > 0;) d.erase(d.begin() + matched[i]);
  Term psi;
  psi.coef = c;
  ExprPtr p = psi_ref();
  psi.fs.push_back({p, 1, expr_key(p)});
  d.push_back(std::move(psi));
  collect(d);
  return true;
}

}  // namespace

InfluenceExpr simplify(const InfluenceExpr& e, DerivationTrace* trace) {
  if (!e.root) fail(Errc::UnsupportedNode, "empty influence expression");
  std::string before = render(e.root);

  Terms d = norm(e.root);
  collect(d);
  ExprPtr normalized = rebuild_terms(d);
  std::string mid = render(normalized);
  if (trace && mid != before) trace->steps.push_back({"algebra-normalize", before, mid});

  if (e.functional) {
    Terms f = norm(e.functional);
    collect(f);
    bool any = false;
    while (recognize_psi(d, f)) any = true;
    if (any) {
      ExprPtr with_psi = rebuild_terms(d);
      if (trace) trace->steps.push_back({"psi-recognition", mid, render(with_psi)});
      return {with_psi, e.functional};
    }
  }
  return {normalized, e.functional};
}

}  // namespace iflab
