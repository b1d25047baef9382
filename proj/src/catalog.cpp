#include "iflab/catalog.hpp"

#include <charconv>
#include <cmath>

#include "iflab/quadrature.hpp"
#include "iflab/rng.hpp"

namespace iflab {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void check_pi(double pi, double floor, const char* what) {
  if (!(pi >= floor))
    fail(Errc::PositivityViolation,
         std::string(what) + " = " + fmt(pi) + " below the positivity floor " + fmt(floor));
}

double level_value(const Atom& z, int idx) { return static_cast<double>(z[static_cast<std::size_t>(idx)]); }

}  // namespace

std::string functional_name(FunctionalId id) {
  switch (id) {
    case FunctionalId::MeanTreated: return "mean_treated";
    case FunctionalId::AteContrast: return "ate_contrast";
    case FunctionalId::ExpectedCondCov: return "expected_cond_cov";
    case FunctionalId::ExpectedDensity: return "expected_density";
    case FunctionalId::StochasticIntervention: return "stochastic_intervention";
    case FunctionalId::LateRatio: return "late_ratio";
    case FunctionalId::Gformula2t: return "gformula_2t";
  }
  return "?";
}

FunctionalId functional_from_string(const std::string& name) {
  for (FunctionalId id : all_functionals())
    if (functional_name(id) == name) return id;
  fail(Errc::UnknownFunctional, "no functional named '" + name + "'");
}

std::vector<FunctionalId> all_functionals() {
  return {FunctionalId::MeanTreated,        FunctionalId::AteContrast,
          FunctionalId::ExpectedCondCov,    FunctionalId::ExpectedDensity,
          FunctionalId::StochasticIntervention, FunctionalId::LateRatio,
          FunctionalId::Gformula2t};
}

const NuisanceSpec* NuisanceManifest::find(const std::string& name) const {
  for (auto& it : items)
    if (it.name == name) return &it;
  return nullptr;
}

double NuisanceBundle::at(const std::string& name, const Row& row, int sel) const {
  auto it = fns.find(name);
  if (it == fns.end()) fail(Errc::BadConfig, "nuisance bundle lacks '" + name + "'");
  return it->second(row, sel);
}

CatalogEntry get_entry(FunctionalId id) {
  CatalogEntry e;
  e.id = id;
  e.name = functional_name(id);
  using K = NuisanceSpec::Kind;
  auto prob = [](std::string n, std::string in) {
    return NuisanceSpec{std::move(n), K::CondProb, std::move(in), true, 0.01, 0.99, 0.01};
  };
  auto mean = [](std::string n, std::string in) {
    return NuisanceSpec{std::move(n), K::CondMean, std::move(in), false, 0.0, 0.0, 0.0};
  };
  switch (id) {
    case FunctionalId::MeanTreated:
      e.description = "mean outcome under treatment, E{E(Y|X,A=1)}";
      e.manifest.items = {prob("pi", "x -> P(A=1|X=x)"),
                          mean("mu", "x -> E(Y|X=x,A=1)")};
      break;
    case FunctionalId::AteContrast:
      e.description = "average treatment effect, E{E(Y|X,A=1) - E(Y|X,A=0)}";
      e.manifest.items = {prob("pi", "x -> P(A=1|X=x)"),
                          mean("mu", "(x, a) -> E(Y|X=x,A=a)")};
      break;
    case FunctionalId::ExpectedCondCov:
      e.description = "expected conditional covariance, E{Cov(A,Y|X)}";
      e.manifest.items = {mean("pi", "x -> E(A|X=x)"), mean("mu", "x -> E(Y|X=x)")};
      break;
    case FunctionalId::ExpectedDensity:
      e.description = "expected density, integral of p^2";
      e.manifest.items = {
          NuisanceSpec{"dens", K::Density, "z -> p(z)", false, 0.0, 0.0, 0.0}};
      break;
    case FunctionalId::StochasticIntervention:
      e.description = "mean outcome under a stochastic treatment policy g(a|x)";
      e.manifest.items = {prob("pi", "(x, a) -> P(A=a|X=x)"),
                          mean("mu", "(x, a) -> E(Y|X=x,A=a)")};
      break;
    case FunctionalId::LateRatio:
      e.description = "local average treatment effect (instrument ratio)";
      e.manifest.items = {prob("pi", "x -> P(R=1|X=x)"),
                          mean("mu", "(x, r) -> E(Y|X=x,R=r)"),
                          mean("eta", "(x, r) -> E(A|X=x,R=r)")};
      break;
    case FunctionalId::Gformula2t:
      e.description = "two-timepoint g-formula, always-treated regime";
      e.manifest.items = {prob("pi1", "x1 -> P(A1=1|X1=x1)"),
                          prob("pi2", "(x1, x2) -> P(A2=1|X1=x1,A1=1,X2=x2)"),
                          mean("q2", "(x1, x2) -> E(Y|X1=x1,A1=1,X2=x2,A2=1)"),
                          mean("q1", "x1 -> E(q2(X1,X2)|X1=x1,A1=1)")};
      break;
  }
  return e;
}

CatalogEntry get_entry(const std::string& name) {
  return get_entry(functional_from_string(name));
}

double CatalogEntry::uncentered_if(const Row& row, const NuisanceBundle& b) const {
  switch (id) {
    case FunctionalId::MeanTreated: {
      double pi = b.at("pi", row, 0);
      check_pi(pi, positivity_floor, "propensity");
      double mu = b.at("mu", row, 0);
      return (row.a == 1 ? (row.y - mu) / pi : 0.0) + mu;
    }
    case FunctionalId::AteContrast: {
      double pi = b.at("pi", row, 0);
      check_pi(pi, positivity_floor, "propensity");
      check_pi(1.0 - pi, positivity_floor, "control propensity");
      double mu1 = b.at("mu", row, 1);
      double mu0 = b.at("mu", row, 0);
      double t1 = (row.a == 1 ? (row.y - mu1) / pi : 0.0) + mu1;
      double t0 = (row.a == 0 ? (row.y - mu0) / (1.0 - pi) : 0.0) + mu0;
      return t1 - t0;
    }
    case FunctionalId::ExpectedCondCov: {
      double pi = b.at("pi", row, 0);
      double m = b.at("mu", row, 0);
      return (row.a - pi) * (row.y - m);
    }
    case FunctionalId::ExpectedDensity: {
      if (!std::isfinite(b.density_sq_integral))
        fail(Errc::BadConfig, "density bundle lacks its square integral");
      return 2.0 * b.at("dens", row, 0) - b.density_sq_integral;
    }
    case FunctionalId::StochasticIntervention: {
      double pia = b.at("pi", row, row.a);
      check_pi(pia, positivity_floor, "propensity at the observed arm");
      double g_obs = row.a == 1 ? policy.g1 : policy.g0;
      double mu_obs = b.at("mu", row, row.a);
      double shift = policy.g0 * b.at("mu", row, 0) + policy.g1 * b.at("mu", row, 1);
      return g_obs / pia * (row.y - mu_obs) + shift;
    }
    case FunctionalId::LateRatio: {
      if (!std::isfinite(b.ratio_psi_num) || !std::isfinite(b.ratio_psi_den))
        fail(Errc::BadConfig,
             "late_ratio influence needs ratio_psi_num/ratio_psi_den on the bundle "
             "(the ratio estimator sets them)");
      double psi = b.ratio_psi_num / b.ratio_psi_den;
      return psi + (late_if_num(row, b) - psi * late_if_den(row, b)) / b.ratio_psi_den;
    }
    case FunctionalId::Gformula2t: {
      double pi1 = b.at("pi1", row, 0);
      double pi2 = b.at("pi2", row, 0);
      check_pi(pi1, positivity_floor, "first-stage propensity");
      check_pi(pi2, positivity_floor, "second-stage propensity");
      double q2 = b.at("q2", row, 0);
      double q1 = b.at("q1", row, 0);
      double w1 = row.a == 1 ? 1.0 / pi1 : 0.0;
      double w2 = (row.a == 1 && row.a2 == 1) ? 1.0 / (pi1 * pi2) : 0.0;
      return w2 * (row.y - q2) + w1 * (q2 - q1) + q1;
    }
  }
  fail(Errc::UnknownFunctional, "unhandled functional");
}

double CatalogEntry::plugin_term(const Row& row, const NuisanceBundle& b) const {
  switch (id) {
    case FunctionalId::MeanTreated:
      return b.at("mu", row, 0);
    case FunctionalId::AteContrast:
      return b.at("mu", row, 1) - b.at("mu", row, 0);
    case FunctionalId::ExpectedCondCov:
      // the identified expression is itself a single average of
      // (A - E[A|X])(Y - E[Y|X]); its plug-in coincides with the one-step
      return (row.a - b.at("pi", row, 0)) * (row.y - b.at("mu", row, 0));
    case FunctionalId::ExpectedDensity:
      if (!std::isfinite(b.density_sq_integral))
        fail(Errc::BadConfig, "density bundle lacks its square integral");
      return b.density_sq_integral;
    case FunctionalId::StochasticIntervention:
      return policy.g0 * b.at("mu", row, 0) + policy.g1 * b.at("mu", row, 1);
    case FunctionalId::LateRatio:
      fail(Errc::BadConfig, "late_ratio plug-in is a ratio of term means; use the "
                            "late_plugin_num/late_plugin_den pair");
    case FunctionalId::Gformula2t:
      return b.at("q1", row, 0);
  }
  fail(Errc::UnknownFunctional, "unhandled functional");
}

double CatalogEntry::late_if_num(const Row& row, const NuisanceBundle& b) const {
  if (!row.has_r) fail(Errc::MissingColumn, "late_ratio needs an instrument column r");
  double w = b.at("pi", row, 0);
  check_pi(w, positivity_floor, "instrument propensity");
  check_pi(1.0 - w, positivity_floor, "instrument propensity complement");
  double m1 = b.at("mu", row, 1), m0 = b.at("mu", row, 0);
  double corr = row.r == 1 ? (row.y - m1) / w : -(row.y - m0) / (1.0 - w);
  return corr + m1 - m0;
}

double CatalogEntry::late_if_den(const Row& row, const NuisanceBundle& b) const {
  if (!row.has_r) fail(Errc::MissingColumn, "late_ratio needs an instrument column r");
  double w = b.at("pi", row, 0);
  check_pi(w, positivity_floor, "instrument propensity");
  check_pi(1.0 - w, positivity_floor, "instrument propensity complement");
  double q1 = b.at("eta", row, 1), q0 = b.at("eta", row, 0);
  double a = static_cast<double>(row.a);
  double corr = row.r == 1 ? (a - q1) / w : -(a - q0) / (1.0 - w);
  return corr + q1 - q0;
}

double CatalogEntry::late_plugin_num(const Row& row, const NuisanceBundle& b) const {
  return b.at("mu", row, 1) - b.at("mu", row, 0);
}

double CatalogEntry::late_plugin_den(const Row& row, const NuisanceBundle& b) const {
  return b.at("eta", row, 1) - b.at("eta", row, 0);
}

// ---------------------------------------------------------------------------
// discrete conventions

namespace {

void need_vars(const Schema& s, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (!s.has(n))
      fail(Errc::BadConfig, "discrete schema lacks variable '" + std::string(n) + "'");
}

}  // namespace

OwnedRow atom_row(FunctionalId id, const Schema& schema, const Atom& z) {
  OwnedRow o;
  Row& r = o.row;
  switch (id) {
    case FunctionalId::MeanTreated:
    case FunctionalId::AteContrast:
    case FunctionalId::ExpectedCondCov:
    case FunctionalId::StochasticIntervention: {
      need_vars(schema, {"x", "a", "y"});
      o.xs[0] = level_value(z, schema.index_of("x"));
      r.d = 1;
      r.a = z[static_cast<std::size_t>(schema.index_of("a"))];
      r.y = level_value(z, schema.index_of("y"));
      break;
    }
    case FunctionalId::ExpectedDensity: {
      need_vars(schema, {"z"});
      o.xs[0] = level_value(z, schema.index_of("z"));
      r.d = 1;
      break;
    }
    case FunctionalId::LateRatio: {
      need_vars(schema, {"x", "r", "a", "y"});
      o.xs[0] = level_value(z, schema.index_of("x"));
      r.d = 1;
      r.r = z[static_cast<std::size_t>(schema.index_of("r"))];
      r.has_r = true;
      r.a = z[static_cast<std::size_t>(schema.index_of("a"))];
      r.y = level_value(z, schema.index_of("y"));
      break;
    }
    case FunctionalId::Gformula2t: {
      need_vars(schema, {"x1", "a1", "x2", "a2", "y"});
      o.xs[0] = level_value(z, schema.index_of("x1"));
      r.d = 1;
      r.a = z[static_cast<std::size_t>(schema.index_of("a1"))];
      o.x2s[0] = level_value(z, schema.index_of("x2"));
      r.d2 = 1;
      r.a2 = z[static_cast<std::size_t>(schema.index_of("a2"))];
      r.y = level_value(z, schema.index_of("y"));
      break;
    }
  }
  return o;
}

double CatalogEntry::truth(const DiscreteDist& p) const {
  const Schema& s = p.schema();
  auto yval = [&](int yidx) {
    return [yidx](const Atom& a) { return level_value(a, yidx); };
  };
  switch (id) {
    case FunctionalId::MeanTreated: {
      need_vars(s, {"x", "a", "y"});
      int xi = s.index_of("x"), yi = s.index_of("y");
      double acc = 0.0;
      for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
        double px = marginal_mass(p, {{"x", lx}});
        if (px == 0.0) continue;
        acc += px * conditional_mean(p, yval(yi), {{"x", lx}, {"a", 1}});
      }
      return acc;
    }
    case FunctionalId::AteContrast: {
      need_vars(s, {"x", "a", "y"});
      int xi = s.index_of("x"), yi = s.index_of("y");
      double acc = 0.0;
      for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
        double px = marginal_mass(p, {{"x", lx}});
        if (px == 0.0) continue;
        acc += px * (conditional_mean(p, yval(yi), {{"x", lx}, {"a", 1}}) -
                     conditional_mean(p, yval(yi), {{"x", lx}, {"a", 0}}));
      }
      return acc;
    }
    case FunctionalId::ExpectedCondCov: {
      need_vars(s, {"x", "a", "y"});
      int xi = s.index_of("x"), ai = s.index_of("a"), yi = s.index_of("y");
      double acc = 0.0;
      for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
        double px = marginal_mass(p, {{"x", lx}});
        if (px == 0.0) continue;
        double eay = conditional_mean(
            p, [&](const Atom& a) { return level_value(a, ai) * level_value(a, yi); },
            {{"x", lx}});
        double ea = conditional_mean(
            p, [&](const Atom& a) { return level_value(a, ai); }, {{"x", lx}});
        double ey = conditional_mean(p, yval(yi), {{"x", lx}});
        acc += px * (eay - ea * ey);
      }
      return acc;
    }
    case FunctionalId::ExpectedDensity: {
      need_vars(s, {"z"});
      double acc = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) acc += p.mass_at(i) * p.mass_at(i);
      return acc;
    }
    case FunctionalId::StochasticIntervention: {
      need_vars(s, {"x", "a", "y"});
      int xi = s.index_of("x"), ai = s.index_of("a"), yi = s.index_of("y");
      if (s.vars[static_cast<std::size_t>(ai)].levels != 2)
        fail(Errc::BadConfig, "stochastic_intervention needs binary treatment");
      double acc = 0.0;
      for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
        double px = marginal_mass(p, {{"x", lx}});
        if (px == 0.0) continue;
        for (int la = 0; la < 2; ++la) {
          double g = la == 1 ? policy.g1 : policy.g0;
          acc += px * g * conditional_mean(p, yval(yi), {{"x", lx}, {"a", la}});
        }
      }
      return acc;
    }
    case FunctionalId::LateRatio: {
      need_vars(s, {"x", "r", "a", "y"});
      int xi = s.index_of("x"), ai = s.index_of("a"), yi = s.index_of("y");
      double num = 0.0, den = 0.0;
      for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
        double px = marginal_mass(p, {{"x", lx}});
        if (px == 0.0) continue;
        num += px * (conditional_mean(p, yval(yi), {{"x", lx}, {"r", 1}}) -
                     conditional_mean(p, yval(yi), {{"x", lx}, {"r", 0}}));
        auto aval = [&](const Atom& a) { return level_value(a, ai); };
        den += px * (conditional_mean(p, aval, {{"x", lx}, {"r", 1}}) -
                     conditional_mean(p, aval, {{"x", lx}, {"r", 0}}));
      }
      if (std::abs(den) < 1e-12)
        fail(Errc::TruthUnavailable, "late_ratio truth has a degenerate denominator");
      return num / den;
    }
    case FunctionalId::Gformula2t: {
      need_vars(s, {"x1", "a1", "x2", "a2", "y"});
      int x1i = s.index_of("x1"), x2i = s.index_of("x2"), yi = s.index_of("y");
      double acc = 0.0;
      for (int l1 = 0; l1 < s.vars[static_cast<std::size_t>(x1i)].levels; ++l1) {
        double p1 = marginal_mass(p, {{"x1", l1}});
        if (p1 == 0.0) continue;
        double p_treated = marginal_mass(p, {{"x1", l1}, {"a1", 1}});
        if (p_treated == 0.0)
          fail(Errc::PositivityViolation, "no treated mass at the first stage");
        for (int l2 = 0; l2 < s.vars[static_cast<std::size_t>(x2i)].levels; ++l2) {
          double pt = marginal_mass(p, {{"x1", l1}, {"a1", 1}, {"x2", l2}});
          if (pt == 0.0) continue;
          double trans = pt / p_treated;
          acc += p1 * trans *
                 conditional_mean(p, yval(yi),
                                  {{"x1", l1}, {"a1", 1}, {"x2", l2}, {"a2", 1}});
        }
      }
      return acc;
    }
  }
  fail(Errc::UnknownFunctional, "unhandled functional");
}

// ---------------------------------------------------------------------------
// exact bundles on discrete distributions

NuisanceBundle bundle_from_dist(FunctionalId id, const DiscreteDist& dist) {
  auto p = std::make_shared<const DiscreteDist>(dist);
  const Schema& s = p->schema();
  NuisanceBundle b;
  b.clamp_events = std::make_shared<std::atomic<long long>>(0);
  auto lvl = [](double v) { return static_cast<int>(v); };
  switch (id) {
    case FunctionalId::MeanTreated:
    case FunctionalId::AteContrast:
    case FunctionalId::ExpectedCondCov:
    case FunctionalId::StochasticIntervention: {
      need_vars(s, {"x", "a", "y"});
      int yi = s.index_of("y");
      if (id == FunctionalId::ExpectedCondCov) {
        int ai = s.index_of("a");
        b.fns["pi"] = [p, ai](const Row& r, int) {
          return conditional_mean(
              *p, [ai](const Atom& a) { return level_value(a, ai); },
              {{"x", static_cast<int>(r.x[0])}});
        };
        b.fns["mu"] = [p, yi](const Row& r, int) {
          return conditional_mean(
              *p, [yi](const Atom& a) { return level_value(a, yi); },
              {{"x", static_cast<int>(r.x[0])}});
        };
      } else if (id == FunctionalId::StochasticIntervention) {
        b.fns["pi"] = [p, lvl](const Row& r, int sel) {
          double num = marginal_mass(*p, {{"x", lvl(r.x[0])}, {"a", sel}});
          double den = marginal_mass(*p, {{"x", lvl(r.x[0])}});
          if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty covariate cell");
          return num / den;
        };
        b.fns["mu"] = [p, yi, lvl](const Row& r, int sel) {
          return conditional_mean(
              *p, [yi](const Atom& a) { return level_value(a, yi); },
              {{"x", lvl(r.x[0])}, {"a", sel}});
        };
      } else {
        b.fns["pi"] = [p, lvl](const Row& r, int) {
          double num = marginal_mass(*p, {{"x", lvl(r.x[0])}, {"a", 1}});
          double den = marginal_mass(*p, {{"x", lvl(r.x[0])}});
          if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty covariate cell");
          return num / den;
        };
        if (id == FunctionalId::MeanTreated) {
          b.fns["mu"] = [p, yi, lvl](const Row& r, int) {
            return conditional_mean(
                *p, [yi](const Atom& a) { return level_value(a, yi); },
                {{"x", lvl(r.x[0])}, {"a", 1}});
          };
        } else {
          b.fns["mu"] = [p, yi, lvl](const Row& r, int sel) {
            return conditional_mean(
                *p, [yi](const Atom& a) { return level_value(a, yi); },
                {{"x", lvl(r.x[0])}, {"a", sel}});
          };
        }
      }
      break;
    }
    case FunctionalId::ExpectedDensity: {
      need_vars(s, {"z"});
      b.fns["dens"] = [p](const Row& r, int) {
        Atom z{static_cast<int>(r.x[0])};
        return p->mass(z);
      };
      double acc = 0.0;
      for (std::size_t i = 0; i < p->size(); ++i) acc += p->mass_at(i) * p->mass_at(i);
      b.density_sq_integral = acc;
      break;
    }
    case FunctionalId::LateRatio: {
      need_vars(s, {"x", "r", "a", "y"});
      int yi = s.index_of("y"), ai = s.index_of("a");
      b.fns["pi"] = [p, lvl](const Row& r, int) {
        double num = marginal_mass(*p, {{"x", lvl(r.x[0])}, {"r", 1}});
        double den = marginal_mass(*p, {{"x", lvl(r.x[0])}});
        if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty covariate cell");
        return num / den;
      };
      b.fns["mu"] = [p, yi, lvl](const Row& r, int sel) {
        return conditional_mean(
            *p, [yi](const Atom& a) { return level_value(a, yi); },
            {{"x", lvl(r.x[0])}, {"r", sel}});
      };
      b.fns["eta"] = [p, ai, lvl](const Row& r, int sel) {
        return conditional_mean(
            *p, [ai](const Atom& a) { return level_value(a, ai); },
            {{"x", lvl(r.x[0])}, {"r", sel}});
      };
      break;
    }
    case FunctionalId::Gformula2t: {
      need_vars(s, {"x1", "a1", "x2", "a2", "y"});
      int yi = s.index_of("y");
      b.fns["pi1"] = [p, lvl](const Row& r, int) {
        double num = marginal_mass(*p, {{"x1", lvl(r.x[0])}, {"a1", 1}});
        double den = marginal_mass(*p, {{"x1", lvl(r.x[0])}});
        if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty covariate cell");
        return num / den;
      };
      b.fns["pi2"] = [p, lvl](const Row& r, int) {
        double num = marginal_mass(
            *p, {{"x1", lvl(r.x[0])}, {"a1", 1}, {"x2", lvl(r.x2[0])}, {"a2", 1}});
        double den =
            marginal_mass(*p, {{"x1", lvl(r.x[0])}, {"a1", 1}, {"x2", lvl(r.x2[0])}});
        if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty treated history cell");
        return num / den;
      };
      b.fns["q2"] = [p, yi, lvl](const Row& r, int) {
        return conditional_mean(
            *p, [yi](const Atom& a) { return level_value(a, yi); },
            {{"x1", lvl(r.x[0])}, {"a1", 1}, {"x2", lvl(r.x2[0])}, {"a2", 1}});
      };
      b.fns["q1"] = [p, yi, lvl](const Row& r, int) {
        // E[q2(X1, X2) | X1, A1=1] with q2 evaluated under the same dist
        int l1 = lvl(r.x[0]);
        const Schema& sc = p->schema();
        int x2i = sc.index_of("x2");
        double den = marginal_mass(*p, {{"x1", l1}, {"a1", 1}});
        if (den == 0.0) fail(Errc::ZeroConditioningMass, "empty treated cell");
        double acc = 0.0;
        for (int l2 = 0; l2 < sc.vars[static_cast<std::size_t>(x2i)].levels; ++l2) {
          double pt = marginal_mass(*p, {{"x1", l1}, {"a1", 1}, {"x2", l2}});
          if (pt == 0.0) continue;
          double q2v = conditional_mean(
              *p, [yi](const Atom& a) { return level_value(a, yi); },
              {{"x1", l1}, {"a1", 1}, {"x2", l2}, {"a2", 1}});
          acc += pt / den * q2v;
        }
        return acc;
      };
      break;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// remainders

bool CatalogEntry::has_closed_form_remainder() const {
  switch (id) {
    case FunctionalId::MeanTreated:
    case FunctionalId::AteContrast:
    case FunctionalId::ExpectedCondCov:
    case FunctionalId::ExpectedDensity:
      return true;
    default:
      return false;
  }
}

namespace {

// Integrates f(x_level) weighted by the x-marginal of p.
double x_weighted_sum(const DiscreteDist& p, const std::string& xname,
                      const std::function<double(int)>& f) {
  const Schema& s = p.schema();
  int xi = s.index_of(xname);
  double acc = 0.0;
  for (int lx = 0; lx < s.vars[static_cast<std::size_t>(xi)].levels; ++lx) {
    double px = marginal_mass(p, {{xname, lx}});
    if (px == 0.0) continue;
    acc += px * f(lx);
  }
  return acc;
}

}  // namespace

double CatalogEntry::remainder(const NuisanceBundle& hat, const NuisanceBundle& exact,
                               const DiscreteDist& p) const {
  if (&hat == &exact) return 0.0;  // R2(P, P) = 0 by definition
  switch (id) {
    case FunctionalId::MeanTreated: {
      return x_weighted_sum(p, "x", [&](int lx) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lx);
        o.row.d = 1;
        double pi = exact.at("pi", o.row, 0), pih = hat.at("pi", o.row, 0);
        double mu = exact.at("mu", o.row, 0), muh = hat.at("mu", o.row, 0);
        return (pi / pih - 1.0) * (mu - muh);
      });
    }
    case FunctionalId::AteContrast: {
      return x_weighted_sum(p, "x", [&](int lx) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lx);
        o.row.d = 1;
        double pi = exact.at("pi", o.row, 0), pih = hat.at("pi", o.row, 0);
        double m1 = exact.at("mu", o.row, 1), m1h = hat.at("mu", o.row, 1);
        double m0 = exact.at("mu", o.row, 0), m0h = hat.at("mu", o.row, 0);
        return (pi / pih - 1.0) * (m1 - m1h) -
               ((1.0 - pi) / (1.0 - pih) - 1.0) * (m0 - m0h);
      });
    }
    case FunctionalId::ExpectedCondCov: {
      return x_weighted_sum(p, "x", [&](int lx) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lx);
        o.row.d = 1;
        double pi = exact.at("pi", o.row, 0), pih = hat.at("pi", o.row, 0);
        double m = exact.at("mu", o.row, 0), mh = hat.at("mu", o.row, 0);
        return (pih - pi) * (mh - m);
      });
    }
    case FunctionalId::ExpectedDensity: {
      const Schema& s = p.schema();
      need_vars(s, {"z"});
      double acc = 0.0;
      for (int lz = 0; lz < s.vars[0].levels; ++lz) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lz);
        o.row.d = 1;
        double diff = hat.at("dens", o.row, 0) - exact.at("dens", o.row, 0);
        acc -= diff * diff;
      }
      return acc;
    }
    case FunctionalId::LateRatio: {
      // von Mises identity for the ratio: psi(eta_hat) - psi + E_P[phi(.;eta_hat)]
      const Schema& s = p.schema();
      double psin_h = 0.0, psid_h = 0.0;
      psin_h = x_weighted_sum(p, "x", [&](int lx) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lx);
        o.row.d = 1;
        return hat.at("mu", o.row, 1) - hat.at("mu", o.row, 0);
      });
      psid_h = x_weighted_sum(p, "x", [&](int lx) {
        OwnedRow o;
        o.xs[0] = static_cast<double>(lx);
        o.row.d = 1;
        return hat.at("eta", o.row, 1) - hat.at("eta", o.row, 0);
      });
      if (std::abs(psid_h) < 1e-12)
        fail(Errc::WeakDenominator, "perturbed denominator is degenerate");
      double psi_h = psin_h / psid_h;
      double en = 0.0, ed = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.mass_at(i) == 0.0) continue;
        OwnedRow o = atom_row(id, s, p.atom_at(i));
        en += p.mass_at(i) * late_if_num(o.row, hat);
        ed += p.mass_at(i) * late_if_den(o.row, hat);
      }
      double mean_phi = ((en - psin_h) - psi_h * (ed - psid_h)) / psid_h;
      return psi_h - truth(p) + mean_phi;
    }
    default: {
      // defining identity E_P[phi_u(.;eta_hat)] - psi(P) by exact summation
      double acc = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.mass_at(i) == 0.0) continue;
        OwnedRow o = atom_row(id, p.schema(), p.atom_at(i));
        acc += p.mass_at(i) * uncentered_if(o.row, hat);
      }
      return acc - truth(p);
    }
  }
}

std::function<double(double)> remainder_integrand(
    const CatalogEntry& entry, const NuisanceBundle& hat,
    const NuisanceBundle& exact, std::function<double(double)> x_density) {
  auto row_at = [](double xv) {
    OwnedRow o;
    o.xs[0] = xv;
    o.row.d = 1;
    return o;
  };
  const NuisanceBundle* h = &hat;
  const NuisanceBundle* e = &exact;
  switch (entry.id) {
    case FunctionalId::MeanTreated:
      return [row_at, h, e, w = std::move(x_density)](double xv) {
        OwnedRow o = row_at(xv);
        double pi = e->at("pi", o.row, 0), pih = h->at("pi", o.row, 0);
        double mu = e->at("mu", o.row, 0), muh = h->at("mu", o.row, 0);
        return (pi / pih - 1.0) * (mu - muh) * w(xv);
      };
    case FunctionalId::AteContrast:
      return [row_at, h, e, w = std::move(x_density)](double xv) {
        OwnedRow o = row_at(xv);
        double pi = e->at("pi", o.row, 0), pih = h->at("pi", o.row, 0);
        double m1 = e->at("mu", o.row, 1), m1h = h->at("mu", o.row, 1);
        double m0 = e->at("mu", o.row, 0), m0h = h->at("mu", o.row, 0);
        return ((pi / pih - 1.0) * (m1 - m1h) -
                ((1.0 - pi) / (1.0 - pih) - 1.0) * (m0 - m0h)) *
               w(xv);
      };
    case FunctionalId::ExpectedCondCov:
      return [row_at, h, e, w = std::move(x_density)](double xv) {
        OwnedRow o = row_at(xv);
        double pi = e->at("pi", o.row, 0), pih = h->at("pi", o.row, 0);
        double m = e->at("mu", o.row, 0), mh = h->at("mu", o.row, 0);
        return (pih - pi) * (mh - m) * w(xv);
      };
    case FunctionalId::ExpectedDensity:
      return [row_at, h, e](double zv) {
        OwnedRow o = row_at(zv);
        double diff = h->at("dens", o.row, 0) - e->at("dens", o.row, 0);
        return -diff * diff;
      };
    default:
      fail(Errc::QuadratureFailure,
           "no closed-form remainder for " + entry.name +
               "; use the discrete identity form");
  }
}

double remainder_quadrature(const CatalogEntry& entry, const NuisanceBundle& hat,
                            const NuisanceBundle& exact,
                            const std::function<double(double)>& x_density,
                            double lo, double hi, double tol) {
  return adaptive_simpson(remainder_integrand(entry, hat, exact, x_density), lo,
                          hi, tol);
}

// ---------------------------------------------------------------------------
// learned bundles

namespace {

std::vector<double> x1x2_matrix(const Dataset& ds) {
  std::vector<double> m;
  m.reserve(ds.n * (ds.d + ds.d2));
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* px = ds.row_x(i);
    m.insert(m.end(), px, px + ds.d);
    const double* p2 = ds.row_x2(i);
    m.insert(m.end(), p2, p2 + ds.d2);
  }
  return m;
}

std::vector<std::size_t> rows_where(const Dataset& ds,
                                    const std::function<bool(std::size_t)>& pred) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.n; ++i)
    if (pred(i)) idx.push_back(i);
  return idx;
}

std::vector<double> gather_matrix(const std::vector<double>& X, std::size_t d,
                                  const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (std::size_t i : rows)
    out.insert(out.end(), X.begin() + static_cast<std::ptrdiff_t>(i * d),
               X.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return out;
}

const LearnerSpec& spec_for(const std::map<std::string, LearnerSpec>& specs,
                            const std::string& name) {
  auto it = specs.find(name);
  if (it == specs.end())
    fail(Errc::BadConfig, "no learner specified for nuisance '" + name + "'");
  return it->second;
}

// shared_ptr so the closures stay cheap to copy
using FitPtr = std::shared_ptr<const RegressionFit>;

FitPtr fit_one(const Dataset& ds, const std::vector<std::size_t>& rows, bool use_x2,
               const std::function<double(std::size_t)>& target,
               const LearnerSpec& spec, std::uint64_t seed) {
  if (rows.empty()) fail(Errc::EmptyData, "no rows available to fit a nuisance");
  std::size_t d = use_x2 ? ds.d + ds.d2 : ds.d;
  std::vector<double> X =
      use_x2 ? gather_matrix(x1x2_matrix(ds), d, rows) : gather_matrix(ds.x, ds.d, rows);
  std::vector<double> t;
  t.reserve(rows.size());
  for (std::size_t i : rows) t.push_back(target(i));
  return std::make_shared<const RegressionFit>(fit_spec(X, d, t, spec, seed));
}

FitPtr clamp_fit(FitPtr fit, const NuisanceSpec& ns,
                 const std::shared_ptr<std::atomic<long long>>& counter) {
  if (!ns.ranged) return fit;
  return std::make_shared<const RegressionFit>(clamp(*fit, ns.lo, ns.hi, counter));
}

}  // namespace

NuisanceBundle fit_bundle(const CatalogEntry& entry, const Dataset& train,
                          const std::map<std::string, LearnerSpec>& specs,
                          std::uint64_t seed) {
  train.validate();
  NuisanceBundle b;
  b.clamp_events = std::make_shared<std::atomic<long long>>(0);
  auto all = rows_where(train, [](std::size_t) { return true; });
  auto sub_seed = [&](int j) { return mix_seed(seed, static_cast<std::uint64_t>(j)); };
  auto a_of = [&train](std::size_t i) { return static_cast<double>(train.a[i]); };
  auto y_of = [&train](std::size_t i) { return train.y[i]; };

  switch (entry.id) {
    case FunctionalId::MeanTreated: {
      auto pi = clamp_fit(fit_one(train, all, false, a_of, spec_for(specs, "pi"), sub_seed(0)),
                          *entry.manifest.find("pi"), b.clamp_events);
      auto treated = rows_where(train, [&](std::size_t i) { return train.a[i] == 1; });
      auto mu = fit_one(train, treated, false, y_of, spec_for(specs, "mu"), sub_seed(1));
      b.fns["pi"] = [pi](const Row& r, int) { return pi->predict(r.x); };
      b.fns["mu"] = [mu](const Row& r, int) { return mu->predict(r.x); };
      break;
    }
    case FunctionalId::AteContrast: {
      auto pi = clamp_fit(fit_one(train, all, false, a_of, spec_for(specs, "pi"), sub_seed(0)),
                          *entry.manifest.find("pi"), b.clamp_events);
      auto t1 = rows_where(train, [&](std::size_t i) { return train.a[i] == 1; });
      auto t0 = rows_where(train, [&](std::size_t i) { return train.a[i] == 0; });
      auto mu1 = fit_one(train, t1, false, y_of, spec_for(specs, "mu"), sub_seed(1));
      auto mu0 = fit_one(train, t0, false, y_of, spec_for(specs, "mu"), sub_seed(2));
      b.fns["pi"] = [pi](const Row& r, int) { return pi->predict(r.x); };
      b.fns["mu"] = [mu1, mu0](const Row& r, int sel) {
        return sel == 1 ? mu1->predict(r.x) : mu0->predict(r.x);
      };
      break;
    }
    case FunctionalId::ExpectedCondCov: {
      auto pi = fit_one(train, all, false, a_of, spec_for(specs, "pi"), sub_seed(0));
      auto mu = fit_one(train, all, false, y_of, spec_for(specs, "mu"), sub_seed(1));
      b.fns["pi"] = [pi](const Row& r, int) { return pi->predict(r.x); };
      b.fns["mu"] = [mu](const Row& r, int) { return mu->predict(r.x); };
      break;
    }
    case FunctionalId::ExpectedDensity: {
      const LearnerSpec& spec = spec_for(specs, "dens");
      if (spec.kind != LearnerSpec::Kind::Kde)
        fail(Errc::BadLearnerSpec, "expected_density needs a kde learner");
      std::vector<double> xs(train.n);
      for (std::size_t i = 0; i < train.n; ++i) xs[i] = train.x[i * train.d];
      double h = spec.silverman ? silverman_bandwidth(xs) : spec.h;
      auto dens = std::make_shared<const DensityFit>(fit_density(xs, h));
      b.fns["dens"] = [dens](const Row& r, int) { return dens->predict(r.x[0]); };
      b.density_sq_integral = dens->square_integral();
      break;
    }
    case FunctionalId::StochasticIntervention: {
      auto pi = clamp_fit(fit_one(train, all, false, a_of, spec_for(specs, "pi"), sub_seed(0)),
                          *entry.manifest.find("pi"), b.clamp_events);
      auto t1 = rows_where(train, [&](std::size_t i) { return train.a[i] == 1; });
      auto t0 = rows_where(train, [&](std::size_t i) { return train.a[i] == 0; });
      auto mu1 = fit_one(train, t1, false, y_of, spec_for(specs, "mu"), sub_seed(1));
      auto mu0 = fit_one(train, t0, false, y_of, spec_for(specs, "mu"), sub_seed(2));
      b.fns["pi"] = [pi](const Row& r, int sel) {
        double p1 = pi->predict(r.x);
        return sel == 1 ? p1 : 1.0 - p1;
      };
      b.fns["mu"] = [mu1, mu0](const Row& r, int sel) {
        return sel == 1 ? mu1->predict(r.x) : mu0->predict(r.x);
      };
      break;
    }
    case FunctionalId::LateRatio: {
      if (!train.has_instrument)
        fail(Errc::MissingColumn, "late_ratio needs an instrument column r");
      auto r_of = [&train](std::size_t i) { return static_cast<double>(train.r[i]); };
      auto pi = clamp_fit(fit_one(train, all, false, r_of, spec_for(specs, "pi"), sub_seed(0)),
                          *entry.manifest.find("pi"), b.clamp_events);
      auto r1 = rows_where(train, [&](std::size_t i) { return train.r[i] == 1; });
      auto r0 = rows_where(train, [&](std::size_t i) { return train.r[i] == 0; });
      auto mu1 = fit_one(train, r1, false, y_of, spec_for(specs, "mu"), sub_seed(1));
      auto mu0 = fit_one(train, r0, false, y_of, spec_for(specs, "mu"), sub_seed(2));
      auto eta1 = fit_one(train, r1, false, a_of, spec_for(specs, "eta"), sub_seed(3));
      auto eta0 = fit_one(train, r0, false, a_of, spec_for(specs, "eta"), sub_seed(4));
      b.fns["pi"] = [pi](const Row& r, int) { return pi->predict(r.x); };
      b.fns["mu"] = [mu1, mu0](const Row& r, int sel) {
        return sel == 1 ? mu1->predict(r.x) : mu0->predict(r.x);
      };
      b.fns["eta"] = [eta1, eta0](const Row& r, int sel) {
        return sel == 1 ? eta1->predict(r.x) : eta0->predict(r.x);
      };
      break;
    }
    case FunctionalId::Gformula2t: {
      if (train.d2 == 0)
        fail(Errc::MissingColumn, "gformula_2t needs x2_*/a2 columns");
      auto a2_of = [&train](std::size_t i) { return static_cast<double>(train.a2[i]); };
      auto pi1 = clamp_fit(fit_one(train, all, false, a_of, spec_for(specs, "pi1"), sub_seed(0)),
                           *entry.manifest.find("pi1"), b.clamp_events);
      auto s1 = rows_where(train, [&](std::size_t i) { return train.a[i] == 1; });
      auto pi2 = clamp_fit(fit_one(train, s1, true, a2_of, spec_for(specs, "pi2"), sub_seed(1)),
                           *entry.manifest.find("pi2"), b.clamp_events);
      auto s11 = rows_where(
          train, [&](std::size_t i) { return train.a[i] == 1 && train.a2[i] == 1; });
      auto q2 = fit_one(train, s11, true, y_of, spec_for(specs, "q2"), sub_seed(2));
      // sequential inner regression: fitted q2 values regressed on x1 among
      // first-stage treated rows
      auto q2_at = [&](std::size_t i) {
        std::vector<double> q(train.d + train.d2);
        const double* px = train.row_x(i);
        std::copy(px, px + train.d, q.begin());
        const double* p2 = train.row_x2(i);
        std::copy(p2, p2 + train.d2, q.begin() + static_cast<std::ptrdiff_t>(train.d));
        return q2->predict(q.data());
      };
      auto q1 = fit_one(train, s1, false, q2_at, spec_for(specs, "q1"), sub_seed(3));
      // self-contained: bundle closures outlive the training subset
      auto join = [](const Row& r) {
        std::vector<double> q(r.d + r.d2);
        std::copy(r.x, r.x + r.d, q.begin());
        std::copy(r.x2, r.x2 + r.d2, q.begin() + static_cast<std::ptrdiff_t>(r.d));
        return q;
      };
      b.fns["pi1"] = [pi1](const Row& r, int) { return pi1->predict(r.x); };
      b.fns["pi2"] = [pi2, join](const Row& r, int) {
        auto q = join(r);
        return pi2->predict(q.data());
      };
      b.fns["q2"] = [q2, join](const Row& r, int) {
        auto q = join(r);
        return q2->predict(q.data());
      };
      b.fns["q1"] = [q1](const Row& r, int) { return q1->predict(r.x); };
      break;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// DSL forms under the discrete conventions

std::string late_num_form() {
  return "sum_x { (E[y | x=x, r=1] - E[y | x=x, r=0]) * p(x=x) }";
}

std::string late_den_form() {
  return "sum_x { (E[a | x=x, r=1] - E[a | x=x, r=0]) * p(x=x) }";
}

std::string CatalogEntry::dsl_form() const {
  switch (id) {
    case FunctionalId::MeanTreated:
      return "sum_x { E[y | x=x, a=1] * p(x=x) }";
    case FunctionalId::AteContrast:
      return "sum_x { (E[y | x=x, a=1] - E[y | x=x, a=0]) * p(x=x) }";
    case FunctionalId::ExpectedCondCov:
      return "sum_x { (E[a*y | x=x] - E[a | x=x] * E[y | x=x]) * p(x=x) }";
    case FunctionalId::ExpectedDensity:
      return "sum_z { p(z=z) * p(z=z) }";
    case FunctionalId::StochasticIntervention:
      return "sum_x { sum_a { (" + fmt(policy.g0) + " + " + fmt(policy.g1 - policy.g0) +
             "*a) * E[y | x=x, a=a] * p(x=x) } }";
    case FunctionalId::LateRatio:
      return "(" + late_num_form() + ") / (" + late_den_form() + ")";
    case FunctionalId::Gformula2t:
      return "sum_x1 { sum_x2 { E[y | a2=1, x2=x2, a1=1, x1=x1]"
             " * p(x2=x2, a1=1, x1=x1) / p(a1=1, x1=x1) * p(x1=x1) } }";
  }
  fail(Errc::UnknownFunctional, "unhandled functional");
}

}  // namespace iflab
