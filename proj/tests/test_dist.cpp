#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "iflab/dist.hpp"
#include "iflab/gateaux.hpp"
#include "iflab/rng.hpp"

using namespace iflab;

namespace {

DiscreteDist coin(double p1) {
  return make_discrete(Schema{{"z", 2}}, {{{0}, 1.0 - p1}, {{1}, p1}});
}

// strictly positive random distribution with a mass floor
DiscreteDist random_dist(const Schema& s, Rng& rng, double floor = 0.01) {
  std::size_t n = s.atom_count();
  std::vector<double> w(n);
  double tot = 0.0;
  for (auto& v : w) {
    v = floor + rng.uniform();
    tot += v;
  }
  for (auto& v : w) v /= tot;
  // renormalize exactly enough for the 1e-12 gate
  double s2 = 0.0;
  for (auto v : w) s2 += v;
  w.back() += 1.0 - s2;
  std::vector<std::pair<Atom, double>> entries;
  DiscreteDist shell = DiscreteDist::from_raw(s, std::vector<double>(n, 0.0), false);
  for (std::size_t i = 0; i < n; ++i) entries.push_back({shell.atom_at(i), w[i]});
  return make_discrete(s, entries);
}

}  // namespace

TEST_CASE("make_discrete fills, orders and validates") {
  Schema s{{"x", 2}, {"y", 2}};
  auto d = make_discrete(s, {{{0, 0}, 0.1}, {{0, 1}, 0.2}, {{1, 0}, 0.3}, {{1, 1}, 0.4}});
  CHECK(d.size() == 4);
  CHECK(d.mass({0, 0}) == 0.1);
  CHECK(d.mass({1, 1}) == 0.4);
  // omitted atoms get explicit zero mass
  auto e = make_discrete(Schema{{"x", 3}}, {{{0}, 0.5}, {{2}, 0.5}});
  CHECK(e.mass({1}) == 0.0);

  CHECK_THROWS_WITH_AS(make_discrete(s, {{{0, 0}, -0.1}, {{1, 1}, 1.1}}), doctest::Contains("NegativeMass"), Error);
  CHECK_THROWS_AS(make_discrete(s, {{{0, 0}, 0.5}, {{1, 1}, 0.6}}), Error);
  CHECK_THROWS_AS(make_discrete(s, {{{0, 0}, 0.5}, {{0, 0}, 0.5}}), Error);
  try {
    make_discrete(s, {{{0, 0}, 0.5}, {{1, 1}, 0.6}});
  } catch (const Error& err) {
    CHECK(err.code == Errc::SumNotOne);
  }
  try {
    make_discrete(s, {{{0, 0}, 0.5}, {{0, 0}, 0.5}});
  } catch (const Error& err) {
    CHECK(err.code == Errc::DuplicateAtom);
  }
  try {
    make_discrete(s, {{{0, 5}, 1.0}});
  } catch (const Error& err) {
    CHECK(err.code == Errc::InvalidAtom);
  }
}

TEST_CASE("atom enumeration is lexicographic, first variable most significant") {
  Schema s{{"x", 2}, {"y", 3}};
  auto d = DiscreteDist::from_raw(s, std::vector<double>(6, 1.0 / 6.0), true);
  CHECK(d.atom_at(0) == Atom{0, 0});
  CHECK(d.atom_at(1) == Atom{0, 1});
  CHECK(d.atom_at(2) == Atom{0, 2});
  CHECK(d.atom_at(3) == Atom{1, 0});
  CHECK(d.flat_index({1, 2}) == 5);
}

TEST_CASE("contaminate mixes toward a point mass") {
  auto p = coin(0.75);
  // hand check: 0.9*0.25 = 0.225 and 0.9*0.75 + 0.1 = 0.775
  auto q = contaminate(p, {1}, 0.1);
  CHECK(q.mass({0}) == doctest::Approx(0.225).epsilon(1e-15));
  CHECK(q.mass({1}) == doctest::Approx(0.775).epsilon(1e-15));

  // endpoints: eps=0 is P itself, eps=1 the point mass
  CHECK(contaminate(p, {1}, 0.0) == p);
  auto point = contaminate(p, {1}, 1.0);
  CHECK(point.mass({1}) == 1.0);
  CHECK(point.mass({0}) == 0.0);

  CHECK_THROWS_AS(contaminate(p, {1}, -0.01), Error);
  CHECK_THROWS_AS(contaminate(p, {1}, 1.01), Error);
  try {
    contaminate(p, {1}, 1.01);
  } catch (const Error& err) {
    CHECK(err.code == Errc::EpsOutOfRange);
  }
}

TEST_CASE("contaminate is affine in eps, exactly") {
  Rng rng(42);
  auto p = random_dist(Schema{{"x", 3}, {"y", 2}}, rng);
  Atom z{2, 1};
  for (double eps : {0.0, 0.05, 0.3, 0.77, 1.0}) {
    auto q = contaminate(p, z, eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      double expect = (1.0 - eps) * p.mass_at(i) + (p.atom_at(i) == z ? eps : 0.0);
      CHECK(q.mass_at(i) == expect);  // same fp expression, bitwise equal
    }
  }
}

// Gateaux oracle against hand-computed derivatives.
//
// psi(P) = sum_a p_a^2 on a binary coin (0.25, 0.75), direction z=1:
//   d/deps [ ((1-e)/4)^2 + ((1-e)*3/4 + e)^2 ] at e=0
//     = 2*(1/4)*(-1/4) + 2*(3/4)*(1/4) = -0.125 + 0.375 = 0.25.
TEST_CASE("gateaux derivative of the expected-mass functional") {
  FunctionalEvaluator sq = [](const DiscreteDist& d) {
    double s = 0.0;
    for (double m : d.masses()) s += m * m;
    return s;
  };
  auto p = coin(0.75);
  auto g = gateaux_derivative(sq, p, {1});
  CHECK(g.scheme == DiffScheme::RichardsonCentral);
  CHECK(g.value == doctest::Approx(0.25).epsilon(1e-10));
  // uniform coin: derivative 2(p(z) - psi) = 2(0.5 - 0.5) = 0 at either atom
  auto u = coin(0.5);
  CHECK(gateaux_derivative(sq, u, {0}).value == doctest::Approx(0.0).epsilon(1e-10));
}

// psi(P) = E[Z] = sum_a a p_a on (0.25, 0.75):
//   derivative along z is z - E[Z]; at z=1 that is 0.25, at z=0 it is -0.75.
TEST_CASE("gateaux derivative of the mean") {
  FunctionalEvaluator mean = [](const DiscreteDist& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d.atom_at(i)[0] * d.mass_at(i);
    return s;
  };
  auto p = coin(0.75);
  CHECK(gateaux_derivative(mean, p, {1}).value == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(gateaux_derivative(mean, p, {0}).value == doctest::Approx(-0.75).epsilon(1e-10));
}

// Cubic functional, analytic gradient check. psi = sum_a c_a p_a^3 with
// c = (1.3, -0.7, 2.1), P = (0.2, 0.3, 0.5). Pathwise derivative at z:
//   sum_a 3 c_a p_a^2 (1[a=z] - p_a)
// At z=0: 3*(1.3*0.04*0.8 - 0.7*0.09*(-0.3) + 2.1*0.25*(-0.5)) = -0.606.
TEST_CASE("richardson hits 1e-9 on cubic functionals at the default step") {
  std::vector<double> c{1.3, -0.7, 2.1};
  FunctionalEvaluator cubic = [&](const DiscreteDist& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += c[i] * std::pow(d.mass_at(i), 3);
    return s;
  };
  auto p = make_discrete(Schema{{"x", 3}}, {{{0}, 0.2}, {{1}, 0.3}, {{2}, 0.5}});
  for (int z = 0; z < 3; ++z) {
    double analytic = 0.0;
    for (int a = 0; a < 3; ++a)
      analytic += 3.0 * c[a] * p.mass_at(a) * p.mass_at(a) * ((a == z ? 1.0 : 0.0) - p.mass_at(a));
    auto g = gateaux_derivative(cubic, p, {z}, 1e-4);
    CHECK(g.scheme == DiffScheme::RichardsonCentral);
    CHECK(std::abs(g.value - analytic) <= 1e-9);
  }
  CHECK(std::abs(gateaux_derivative(cubic, p, {0}).value - (-0.606)) <= 1e-9);
}

TEST_CASE("gateaux validates the step and reports evaluation failures") {
  FunctionalEvaluator one = [](const DiscreteDist&) { return 1.0; };
  auto p = coin(0.5);
  CHECK_THROWS_AS(gateaux_derivative(one, p, {1}, 0.0), Error);
  CHECK_THROWS_AS(gateaux_derivative(one, p, {1}, 0.02), Error);
  FunctionalEvaluator boom = [](const DiscreteDist&) -> double {
    fail(Errc::ZeroConditioningMass, "synthetic");
  };
  try {
    gateaux_derivative(boom, p, {1});
    CHECK(false);
  } catch (const Error& err) {
    CHECK(err.code == Errc::EvalFailure);
  }
}

TEST_CASE("tiny point mass falls back to the one-sided scheme") {
  // p(z=2) = 1e-6 < h/(1+h) with h = 1e-4, so the central path is invalid.
  auto p = make_discrete(Schema{{"x", 3}},
                         {{{0}, 0.499999}, {{1}, 0.5}, {{2}, 1e-6}});
  FunctionalEvaluator sq = [](const DiscreteDist& d) {
    double s = 0.0;
    for (double m : d.masses()) s += m * m;
    return s;
  };
  auto g = gateaux_derivative(sq, p, {2}, 1e-4);
  CHECK(g.scheme == DiffScheme::OneSidedForward);
  // analytic: 2(p(z) - psi); psi = 0.499999^2 + 0.25 + 1e-12
  double psi = 0.499999 * 0.499999 + 0.25 + 1e-12;
  CHECK(g.value == doctest::Approx(2.0 * (1e-6 - psi)).epsilon(1e-7));
}

TEST_CASE("pathwise derivatives are mean zero under P") {
  Rng rng(7);
  for (int rep = 0; rep < 25; ++rep) {
    Schema s{{"x", 3}, {"y", 2}};
    auto p = random_dist(s, rng);
    // random smooth functional: quadratic form with fixed coefficients
    std::vector<double> c(p.size());
    for (auto& v : c) v = rng.uniform(-1.0, 1.0);
    FunctionalEvaluator psi = [c](const DiscreteDist& d) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        s1 += c[i] * d.mass_at(i);
        s2 += d.mass_at(i) * d.mass_at(i);
      }
      return s1 + 0.5 * s2 * s1;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      acc += p.mass_at(i) * gateaux_derivative(psi, p, p.atom_at(i)).value;
    CHECK(std::abs(acc) <= 1e-8);
  }
}

TEST_CASE("marginals and conditional means") {
  Schema s{{"x", 2}, {"y", 2}};
  auto d = make_discrete(s, {{{0, 0}, 0.1}, {{0, 1}, 0.2}, {{1, 0}, 0.3}, {{1, 1}, 0.4}});
  CHECK(marginal_mass(d, {{"x", 1}}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(marginal_mass(d, {}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(marginal_mass(d, {{"x", 1}, {"y", 0}}) == doctest::Approx(0.3).epsilon(1e-15));

  auto y_val = [](const Atom& a) { return double(a[1]); };
  // E[Y | X=1] = (0.3*0 + 0.4*1) / 0.7 = 4/7
  CHECK(conditional_mean(d, y_val, {{"x", 1}}) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(conditional_mean(d, y_val, {}) == doctest::Approx(0.6).epsilon(1e-15));

  auto zero_x0 = make_discrete(s, {{{1, 0}, 0.5}, {{1, 1}, 0.5}});
  try {
    conditional_mean(zero_x0, y_val, {{"x", 0}});
    CHECK(false);
  } catch (const Error& err) {
    CHECK(err.code == Errc::ZeroConditioningMass);
  }
  CHECK_THROWS_AS(marginal_mass(d, {{"w", 0}}), Error);
}

TEST_CASE("json round trip preserves every mass bit for bit") {
  Rng rng(99);
  auto p = random_dist(Schema{{"x", 2}, {"a", 2}, {"y", 3}}, rng);
  auto q = dist_from_json(dist_to_json(p));
  CHECK(p == q);
  // and the serialized form is reproducible
  CHECK(dist_to_json(p) == dist_to_json(q));
  CHECK_THROWS_AS(dist_from_json("{"), Error);
  CHECK_THROWS_AS(dist_from_json("{\"schema\":[[\"x\",2]]}"), Error);
}
