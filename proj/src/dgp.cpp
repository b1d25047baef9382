#include "iflab/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "iflab/error.hpp"
#include "iflab/quadrature.hpp"
#include "iflab/rng.hpp"

namespace iflab {

namespace {

double uniform_one(double) { return 1.0; }

// Fixed-grid trapezoid of the closed-form remainder integrand. Fitted
// nearest-neighbour nuisances are piecewise constant, so adaptive
// subdivision cannot meet a tight tolerance near their jumps; a dense fixed
// grid is robust and accurate to ~grid-step * total-variation.
double grid_remainder(const CatalogEntry& entry, const NuisanceBundle& hat,
                      const NuisanceBundle& exact, double lo, double hi,
                      int points) {
  return trapezoid(remainder_integrand(entry, hat, exact, uniform_one), lo, hi,
                   points);
}

NuisanceBundle fresh_bundle() {
  NuisanceBundle b;
  b.clamp_events = std::make_shared<std::atomic<long long>>(0);
  return b;
}

double normal_pdf(double z) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

// ---------------------------------------------------------------------------
// ate-smooth-1d: X ~ Uniform(0,1); A | X ~ Bernoulli(0.3 + 0.4 X);
// Y | X, A=1 ~ Bernoulli(X^2); Y | X, A=0 ~ Bernoulli(X/2).
// Target: mean_treated. psi = integral of x^2 over [0,1] = 1/3.

double ate_pi(double x) { return 0.3 + 0.4 * x; }
double ate_mu1(double x) { return x * x; }
double ate_mu0(double x) { return 0.5 * x; }

DgpSpec make_ate_smooth() {
  DgpSpec s;
  s.id = "ate-smooth-1d";
  s.functional = FunctionalId::MeanTreated;
  s.description =
      "X~Uniform(0,1); A|X~Bernoulli(0.3+0.4X); Y|X,A=1~Bernoulli(X^2); "
      "Y|X,A=0~Bernoulli(X/2); target mean_treated";
  s.truth = 1.0 / 3.0;
  s.truth_note = "analytic: integral of x^2 over the unit interval";
  // Var{phi} = E[mu1(1-mu1)/pi + mu1^2] - psi^2: the conditional second
  // moment of A/pi*(Y-mu1) + mu1 given X is mu1(1-mu1)/pi + mu1^2 (the
  // cross term vanishes because E[A(Y-mu1)|X] = 0).
  double second_moment = adaptive_simpson(
      [](double x) {
        double m = ate_mu1(x), p = ate_pi(x);
        return m * (1.0 - m) / p + m * m;
      },
      0.0, 1.0, 1e-12);
  s.efficient_variance = second_moment - s.truth * s.truth;
  s.x_lo = 0.0;
  s.x_hi = 1.0;
  s.sampler = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.n = n;
    ds.d = 1;
    ds.x.reserve(n);
    ds.a.reserve(n);
    ds.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double x = rng.uniform();
      int a = rng.bernoulli(ate_pi(x));
      double y = rng.bernoulli(a ? ate_mu1(x) : ate_mu0(x));
      ds.x.push_back(x);
      ds.a.push_back(a);
      ds.y.push_back(y);
    }
    return ds;
  };
  s.exact_bundle = []() {
    NuisanceBundle b = fresh_bundle();
    b.fns["pi"] = [](const Row& r, int) { return ate_pi(r.x[0]); };
    b.fns["mu"] = [](const Row& r, int) { return ate_mu1(r.x[0]); };
    return b;
  };
  auto exact = std::make_shared<NuisanceBundle>(s.exact_bundle());
  auto entry = std::make_shared<CatalogEntry>(get_entry(s.functional));
  s.remainder = [exact, entry](const NuisanceBundle& hat) {
    return grid_remainder(*entry, hat, *exact, 0.0, 1.0, 100001);
  };
  return s;
}

// ---------------------------------------------------------------------------
// ecc-randomized: X ~ Uniform(0,1); A ~ Bernoulli(0.5) independent of X;
// Y = A + eps, eps ~ Normal(0,1).
// Target: expected_cond_cov. tau(x) = 1, so psi = pi(1-pi) = 0.25 for all x.

DgpSpec make_ecc_randomized() {
  DgpSpec s;
  s.id = "ecc-randomized";
  s.functional = FunctionalId::ExpectedCondCov;
  s.description =
      "X~Uniform(0,1); A~Bernoulli(0.5) independent of X; Y = A + "
      "Normal(0,1); target expected_cond_cov";
  s.truth = 0.25;
  s.truth_note = "constant integrand: pi(1-pi)*tau = 0.25 at every x";
  // phi = (A - 1/2)(Y - 1/2) = 1/4 + (A - 1/2)eps, so Var{phi} =
  // E[(A-1/2)^2] * E[eps^2] = 1/4.
  s.efficient_variance = 0.25;
  s.x_lo = 0.0;
  s.x_hi = 1.0;
  s.sampler = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.n = n;
    ds.d = 1;
    ds.x.reserve(n);
    ds.a.reserve(n);
    ds.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double x = rng.uniform();
      int a = rng.bernoulli(0.5);
      double y = static_cast<double>(a) + rng.normal();
      ds.x.push_back(x);
      ds.a.push_back(a);
      ds.y.push_back(y);
    }
    return ds;
  };
  s.exact_bundle = []() {
    NuisanceBundle b = fresh_bundle();
    b.fns["pi"] = [](const Row&, int) { return 0.5; };
    // mu is the marginal outcome regression E[Y|X] = E[A] = 1/2
    b.fns["mu"] = [](const Row&, int) { return 0.5; };
    return b;
  };
  auto exact = std::make_shared<NuisanceBundle>(s.exact_bundle());
  auto entry = std::make_shared<CatalogEntry>(get_entry(s.functional));
  s.remainder = [exact, entry](const NuisanceBundle& hat) {
    return grid_remainder(*entry, hat, *exact, 0.0, 1.0, 100001);
  };
  return s;
}

// ---------------------------------------------------------------------------
// density-gauss-mix: Z ~ 1/2 N(-1,1) + 1/2 N(1,1).
// Target: expected_density, psi = integral of p^2. The mixture puts less
// than 1e-15 mass outside [-9, 9], so quadrature on that window is exact to
// the tolerances used here.

double gauss_mix_pdf(double z) {
  return 0.5 * normal_pdf(z + 1.0) + 0.5 * normal_pdf(z - 1.0);
}

DgpSpec make_density_mix() {
  DgpSpec s;
  s.id = "density-gauss-mix";
  s.functional = FunctionalId::ExpectedDensity;
  s.description =
      "Z ~ 1/2 Normal(-1,1) + 1/2 Normal(1,1); target expected_density";
  s.truth = adaptive_simpson(
      [](double z) {
        double p = gauss_mix_pdf(z);
        return p * p;
      },
      -9.0, 9.0, 1e-12);
  s.truth_note =
      "adaptive quadrature of the squared mixture density; closed form "
      "(1+exp(-1))/(4*sqrt(pi)) as cross-check";
  // phi = 2 p(Z) - psi, so Var{phi} = 4 (E[p(Z)^2] - E[p(Z)]^2) with
  // E[p(Z)] = integral of p^2 = psi and E[p(Z)^2] = integral of p^3.
  double p3 = adaptive_simpson(
      [](double z) {
        double p = gauss_mix_pdf(z);
        return p * p * p;
      },
      -9.0, 9.0, 1e-12);
  s.efficient_variance = 4.0 * (p3 - s.truth * s.truth);
  s.x_lo = -9.0;
  s.x_hi = 9.0;
  s.sampler = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.n = n;
    ds.d = 1;
    ds.x.reserve(n);
    ds.a.assign(n, 0);
    ds.y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double center = rng.bernoulli(0.5) ? 1.0 : -1.0;
      ds.x.push_back(center + rng.normal());
    }
    return ds;
  };
  double psi = s.truth;
  s.exact_bundle = [psi]() {
    NuisanceBundle b = fresh_bundle();
    b.fns["dens"] = [](const Row& r, int) { return gauss_mix_pdf(r.x[0]); };
    b.density_sq_integral = psi;
    return b;
  };
  auto exact = std::make_shared<NuisanceBundle>(s.exact_bundle());
  auto entry = std::make_shared<CatalogEntry>(get_entry(s.functional));
  // kernel density fits are smooth, so adaptive quadrature converges
  s.remainder = [exact, entry](const NuisanceBundle& hat) {
    return remainder_quadrature(*entry, hat, *exact, uniform_one, -9.0, 9.0,
                                1e-9);
  };
  return s;
}

// ---------------------------------------------------------------------------
// late-binary: discrete (X, R, A, Y) built from explicit compliance
// classes. Given X = x: 20% always-takers, c(x) = 0.5 + 0.2x compliers,
// the rest never-takers; the instrument is randomized with P(R=1|x) =
// 0.5 + 0.1x; potential outcomes Y(a) ~ Bernoulli(q_a(x)) independent of
// class given x (exclusion), q1(x) = 0.5 + 0.3x, q0(x) = 0.2 + 0.1x.
// Marginalizing classes: P(A=1|x,r) = 0.2 + c(x) r and Y | X, A=a ~
// Bernoulli(q_a(x)) independent of R given (X, A).
// Complier contrast: psi = E[c(X)(q1-q0)(X)] / E[c(X)] = 0.23/0.58.

constexpr double late_px1 = 0.4;
double late_pr1(int x) { return 0.5 + 0.1 * x; }
double late_compliers(int x) { return 0.5 + 0.2 * x; }
double late_pa1(int x, int r) { return 0.2 + late_compliers(x) * r; }
double late_q(int x, int a) {
  return a ? 0.5 + 0.3 * x : 0.2 + 0.1 * x;
}

DiscreteDist make_late_dist() {
  Schema schema{{"x", 2}, {"r", 2}, {"a", 2}, {"y", 2}};
  std::vector<std::pair<Atom, double>> entries;
  for (int x = 0; x < 2; ++x)
    for (int r = 0; r < 2; ++r)
      for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y) {
          double px = x ? late_px1 : 1.0 - late_px1;
          double pr = r ? late_pr1(x) : 1.0 - late_pr1(x);
          double pa = a ? late_pa1(x, r) : 1.0 - late_pa1(x, r);
          double py = y ? late_q(x, a) : 1.0 - late_q(x, a);
          entries.push_back({{x, r, a, y}, px * pr * pa * py});
        }
  return make_discrete(schema, entries);
}

// ---------------------------------------------------------------------------
// gf-2t-binary: two-timepoint binary sequence (X1, A1, X2, A2, Y) with
// explicit transition tables. Target: gformula_2t, the always-treated
// g-formula sum_x1 P(x1) sum_x2 P(x2|x1,a1=1) E[Y|x1,1,x2,1].

constexpr double gf_px1 = 0.5;
double gf_pa1(int x1) { return 0.4 + 0.2 * x1; }
double gf_px2(int x1, int a1) {
  return a1 ? 0.3 + 0.4 * x1 : 0.2 + 0.3 * x1;
}
double gf_pa2(int x1, int a1, int x2) {
  return a1 ? 0.4 + 0.1 * x1 + 0.2 * x2 : 0.5;
}
double gf_py(int x1, int a1, int x2, int a2) {
  return (a1 == 1 && a2 == 1) ? 0.2 + 0.3 * x1 + 0.4 * x2 : 0.3 + 0.2 * x1;
}

DiscreteDist make_gf_dist() {
  Schema schema{{"x1", 2}, {"a1", 2}, {"x2", 2}, {"a2", 2}, {"y", 2}};
  std::vector<std::pair<Atom, double>> entries;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int a1 = 0; a1 < 2; ++a1)
      for (int x2 = 0; x2 < 2; ++x2)
        for (int a2 = 0; a2 < 2; ++a2)
          for (int y = 0; y < 2; ++y) {
            double m = (x1 ? gf_px1 : 1.0 - gf_px1) *
                       (a1 ? gf_pa1(x1) : 1.0 - gf_pa1(x1)) *
                       (x2 ? gf_px2(x1, a1) : 1.0 - gf_px2(x1, a1)) *
                       (a2 ? gf_pa2(x1, a1, x2) : 1.0 - gf_pa2(x1, a1, x2)) *
                       (y ? gf_py(x1, a1, x2, a2) : 1.0 - gf_py(x1, a1, x2, a2));
            entries.push_back({{x1, a1, x2, a2, y}, m});
          }
  return make_discrete(schema, entries);
}

// Variance of the efficient influence function by exact summation over a
// finite support.
double discrete_if_variance(const CatalogEntry& entry, const DiscreteDist& p,
                            const NuisanceBundle& exact, double psi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.mass_at(i) == 0.0) continue;
    OwnedRow o = atom_row(entry.id, p.schema(), p.atom_at(i));
    double v = entry.uncentered_if(o.row, exact) - psi;
    acc += p.mass_at(i) * v * v;
  }
  return acc;
}

DgpSpec make_late_binary() {
  DgpSpec s;
  s.id = "late-binary";
  s.functional = FunctionalId::LateRatio;
  s.description =
      "discrete (X,R,A,Y): 20% always-takers, 0.5+0.2x compliers, "
      "randomized instrument, binary potential outcomes; target late_ratio";
  s.dist = std::make_shared<const DiscreteDist>(make_late_dist());
  // law of total probability over compliance classes:
  //   numerator  E[c(X) (q1-q0)(X)] = 0.6*0.5*0.3 + 0.4*0.7*0.5 = 0.23
  //   denominator E[c(X)]           = 0.6*0.5     + 0.4*0.7     = 0.58
  s.truth = 23.0 / 58.0;
  s.truth_note =
      "complier contrast by hand: E[c(X)(q1-q0)(X)] / E[c(X)] = 0.23/0.58";
  s.x_lo = 0.0;
  s.x_hi = 1.0;
  auto dist = s.dist;
  s.sampler = [dist](std::size_t n, std::uint64_t seed) {
    return sample_discrete(FunctionalId::LateRatio, *dist, n, seed);
  };
  // ratio sub-functional values, again via the compliance classes
  double psi_num = 0.23;
  double psi_den = 0.58;
  s.exact_bundle = [dist, psi_num, psi_den]() {
    NuisanceBundle b = bundle_from_dist(FunctionalId::LateRatio, *dist);
    b.ratio_psi_num = psi_num;
    b.ratio_psi_den = psi_den;
    return b;
  };
  auto exact = std::make_shared<NuisanceBundle>(s.exact_bundle());
  auto entry = std::make_shared<CatalogEntry>(get_entry(s.functional));
  s.efficient_variance = discrete_if_variance(*entry, *dist, *exact, s.truth);
  s.remainder = [exact, entry, dist](const NuisanceBundle& hat) {
    return entry->remainder(hat, *exact, *dist);
  };
  return s;
}

DgpSpec make_gf_binary() {
  DgpSpec s;
  s.id = "gf-2t-binary";
  s.functional = FunctionalId::Gformula2t;
  s.description =
      "two-timepoint binary sequence with explicit transition tables; "
      "target gformula_2t (always treated)";
  s.dist = std::make_shared<const DiscreteDist>(make_gf_dist());
  // exact g-formula sum by hand:
  //   x1=0: 0.7*0.2 + 0.3*0.6 = 0.32;  x1=1: 0.3*0.5 + 0.7*0.9 = 0.78
  //   psi  = 0.5*(0.32 + 0.78) = 0.55
  s.truth = 0.55;
  s.truth_note = "exact g-formula sum over the 2x2 transition tables";
  s.x_lo = 0.0;
  s.x_hi = 1.0;
  auto dist = s.dist;
  s.sampler = [dist](std::size_t n, std::uint64_t seed) {
    return sample_discrete(FunctionalId::Gformula2t, *dist, n, seed);
  };
  s.exact_bundle = [dist]() {
    return bundle_from_dist(FunctionalId::Gformula2t, *dist);
  };
  auto exact = std::make_shared<NuisanceBundle>(s.exact_bundle());
  auto entry = std::make_shared<CatalogEntry>(get_entry(s.functional));
  s.efficient_variance = discrete_if_variance(*entry, *dist, *exact, s.truth);
  s.remainder = [exact, entry, dist](const NuisanceBundle& hat) {
    return entry->remainder(hat, *exact, *dist);
  };
  return s;
}

}  // namespace

Dataset sample_discrete(FunctionalId id, const DiscreteDist& p, std::size_t n,
                        std::uint64_t seed) {
  const auto& masses = p.masses();
  std::vector<double> cum(masses.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    acc += masses[i];
    cum[i] = acc;
  }
  cum.back() = 1.0;  // guard against cumulative rounding

  Rng rng(seed);
  Dataset ds;
  ds.n = n;
  ds.d = 1;
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t flat = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (flat >= masses.size()) flat = masses.size() - 1;
    OwnedRow o = atom_row(id, p.schema(), p.atom_at(flat));
    ds.x.push_back(o.row.x[0]);
    ds.a.push_back(o.row.a);
    ds.y.push_back(o.row.y);
    if (o.row.has_r) {
      ds.has_instrument = true;
      ds.r.push_back(o.row.r);
    }
    if (o.row.d2 > 0) {
      ds.d2 = 1;
      ds.x2.push_back(o.row.x2[0]);
      ds.a2.push_back(o.row.a2);
    }
  }
  ds.validate();
  return ds;
}

DgpSpec get_dgp(const std::string& id) {
  if (id == "ate-smooth-1d") return make_ate_smooth();
  if (id == "ecc-randomized") return make_ecc_randomized();
  if (id == "density-gauss-mix") return make_density_mix();
  if (id == "late-binary") return make_late_binary();
  if (id == "gf-2t-binary") return make_gf_binary();
  fail(Errc::UnknownDgp, "no registered data-generating process named '" + id +
                             "'; see all_dgps()");
}

std::vector<std::string> all_dgps() {
  return {"ate-smooth-1d", "ecc-randomized", "density-gauss-mix",
          "late-binary", "gf-2t-binary"};
}

}  // namespace iflab
