#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
// Estimator tests. Oracles:
//  - normal quantiles: published table values (Phi^-1(0.975) etc) frozen below
//  - degenerate-data identities (Y constant, exact proportionality) derived by
//    hand in comments
//  - sampling-error checks compare against exact truths of constructed
//    discrete distributions with 3-standard-error bands
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iflab/estimate.hpp"
#include "iflab/rng.hpp"

using namespace iflab;

namespace {

using Fn = std::function<double(const Row&, int)>;

NuisanceBundle const_bundle(std::map<std::string, Fn> fns,
                            double sq = std::numeric_limits<double>::quiet_NaN()) {
  NuisanceBundle b;
  for (auto& [k, v] : fns) b.fns[k] = v;
  b.density_sq_integral = sq;
  return b;
}

Fn cval(double v) {
  return [v](const Row&, int) { return v; };
}

// P(x,a,y) = P(x) P(a|x) P(y|x,a), binary everything; same construction as
// the catalog tests
DiscreteDist xay_product(double px1, const std::function<double(int)>& pi,
                         const std::function<double(int, int)>& py) {
  Schema s{{"x", 2}, {"a", 2}, {"y", 2}};
  std::vector<std::pair<Atom, double>> entries;
  for (int x = 0; x < 2; ++x)
    for (int a = 0; a < 2; ++a)
      for (int y = 0; y < 2; ++y) {
        double px = x == 1 ? px1 : 1.0 - px1;
        double pa = a == 1 ? pi(x) : 1.0 - pi(x);
        double pyv = y == 1 ? py(x, a) : 1.0 - py(x, a);
        entries.push_back({{x, a, y}, px * pa * pyv});
      }
  return make_discrete(s, entries);
}

DiscreteDist example_xay() {
  return xay_product(
      0.5, [](int x) { return 0.25 + 0.5 * x; },
      [](int x, int a) { return a == 1 ? 0.2 + 0.6 * x : 0.1 + 0.2 * x; });
}

DiscreteDist example_late() {
  Schema s{{"x", 2}, {"r", 2}, {"a", 2}, {"y", 2}};
  std::vector<std::pair<Atom, double>> entries;
  for (int x = 0; x < 2; ++x)
    for (int r = 0; r < 2; ++r)
      for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 2; ++y) {
          double pa = a == 1 ? 0.2 + 0.6 * r : 0.8 - 0.6 * r;
          double py = y == 1 ? 0.4 + 0.3 * r : 0.6 - 0.3 * r;
          entries.push_back({{x, r, a, y}, 0.25 * pa * py});
        }
  return make_discrete(s, entries);
}

// i.i.d. sample of atoms materialized as a dataset under the catalog's
// discrete conventions
Dataset sample_from(const DiscreteDist& p, FunctionalId id, std::size_t n,
                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p.mass_at(i);
    cdf[i] = acc;
  }
  Dataset ds;
  ds.n = n;
  ds.d = 1;
  ds.x.resize(n);
  ds.a.assign(n, 0);
  ds.y.assign(n, 0.0);
  if (id == FunctionalId::LateRatio) {
    ds.has_instrument = true;
    ds.r.assign(n, 0);
  }
  if (id == FunctionalId::Gformula2t) {
    ds.d2 = 1;
    ds.x2.assign(n, 0.0);
    ds.a2.assign(n, 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t k = static_cast<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (k >= p.size()) k = p.size() - 1;
    OwnedRow o = atom_row(id, p.schema(), p.atom_at(k));
    ds.x[i] = o.row.x[0];
    ds.a[i] = o.row.a;
    ds.y[i] = o.row.y;
    if (id == FunctionalId::LateRatio) ds.r[i] = o.row.r;
    if (id == FunctionalId::Gformula2t) {
      ds.x2[i] = o.row.x2[0];
      ds.a2[i] = o.row.a2;
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("normal quantile reproduces published values") {
  // frozen from standard normal tables (15+ digits)
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-13));
  CHECK(normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-13));
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-13));
  // round-trip through the normal CDF across the support, including tails
  for (double p : {1e-10, 1e-4, 0.001, 0.3, 0.5, 0.7, 0.977, 0.9999, 1.0 - 1e-9}) {
    double z = normal_quantile(p);
    double back = 0.5 * std::erfc(-z / std::sqrt(2.0));
    CHECK(back == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
  CHECK_THROWS_AS(normal_quantile(-0.2), Error);
}

TEST_CASE("ks statistic against hand values and sanity bands") {
  // single observation at 0: F_n jumps 0 -> 1 there, Phi(0) = 0.5, D = 0.5
  CHECK(ks_statistic({0.0}) == doctest::Approx(0.5).epsilon(1e-12));
  // two points at -1, 1: worst gap is Phi(1) - 0.5 = 0.3413447460685429
  CHECK(ks_statistic({-1.0, 1.0}) ==
        doctest::Approx(0.3413447460685429).epsilon(1e-12));
  Rng rng(8);
  std::vector<double> z(2000);
  for (auto& v : z) v = rng.normal();
  CHECK(ks_statistic(z) < 0.04);  // ~1.36/sqrt(n) = 0.03 at the 5% level
  for (auto& v : z) v += 1.0;     // unit shift: D -> Phi(0.5)-Phi(-0.5) ~ 0.38
  CHECK(ks_statistic(z) > 0.3);
  CHECK_THROWS_AS(ks_statistic({}), Error);
}

TEST_CASE("plug-in estimates: degenerate, exact, and sampled cases") {
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  Dataset ds = sample_from(p, e.id, 2000, 31);

  // mu_hat == 0 -> plug-in is 0 regardless of the data
  auto zero = const_bundle({{"pi", cval(0.5)}, {"mu", cval(0.0)}});
  Estimate z = plugin_estimate(e, zero, ds);
  CHECK(z.psi_hat == 0.0);
  CHECK(z.method == "plugin");
  CHECK(!std::isfinite(z.if_variance));
  CHECK(!std::isfinite(z.ci_lo));
  CHECK(std::isnan(z.se()));
  CHECK(z.level == 0.0);

  // exact mu: E_n[mu(X)] is within sampling error of psi = 0.5;
  // mu in {0.2, 0.8} so Var(mu(X)) = 0.09, 3 se = 3*0.3/sqrt(2000) ~ 0.0201
  NuisanceBundle exact = bundle_from_dist(e.id, p);
  Estimate pe = plugin_estimate(e, exact, ds);
  CHECK(std::abs(pe.psi_hat - 0.5) < 0.021);

  // expected density with the true mass function: exactly sum p^2
  Schema sz{{"z", 4}};
  DiscreteDist pz = DiscreteDist::from_raw(sz, {0.1, 0.2, 0.3, 0.4}, true);
  CatalogEntry ed = get_entry(FunctionalId::ExpectedDensity);
  NuisanceBundle bd = bundle_from_dist(ed.id, pz);
  Dataset dz = sample_from(pz, ed.id, 50, 2);
  Estimate de = plugin_estimate(ed, bd, dz);
  CHECK(de.psi_hat == ed.truth(pz));  // 0.01+0.04+0.09+0.16 = 0.30, exact

  // ratio plug-in on the instrument example: psi = 0.3 / 0.6 = 0.5 exactly
  // for the exact bundle (plug-in terms are x-functions with x ~ marginal)
  CatalogEntry el = get_entry(FunctionalId::LateRatio);
  DiscreteDist pl = example_late();
  Dataset dl = sample_from(pl, el.id, 500, 5);
  NuisanceBundle bl = bundle_from_dist(el.id, pl);
  Estimate le = plugin_estimate(el, bl, dl);
  CHECK(le.psi_hat == doctest::Approx(0.5).epsilon(1e-12));  // x-independent terms

  // degenerate denominator trips the floor
  auto weak = const_bundle(
      {{"pi", cval(0.5)}, {"mu", [](const Row&, int sel) { return 0.1 * sel; }},
       {"eta", cval(0.3)}});  // eta(1) - eta(0) = 0
  CHECK_THROWS_AS(plugin_estimate(el, weak, dl), Error);
  try {
    plugin_estimate(el, weak, dl);
  } catch (const Error& err) {
    CHECK(err.code == Errc::WeakDenominator);
  }
}

TEST_CASE("one-step estimates: identities and degenerate cases") {
  // Y == c with mu_hat == c: every influence value is exactly c
  std::size_t n = 100;
  Dataset ds;
  ds.n = n;
  ds.d = 1;
  ds.x.resize(n);
  ds.a.resize(n);
  ds.y.assign(n, 0.7);
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x[i] = rng.uniform();
    ds.a[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  auto b = const_bundle({{"pi", cval(0.5)}, {"mu", cval(0.7)}});
  Estimate os = onestep_estimate(e, b, ds, 0.95);
  CHECK(os.psi_hat == 0.7);
  CHECK(os.if_variance == 0.0);
  CHECK(os.ci_lo == 0.7);
  CHECK(os.ci_hi == 0.7);
  CHECK(os.method == "onestep");

  // positivity violations surface from the influence evaluation
  auto low = const_bundle({{"pi", cval(0.001)}, {"mu", cval(0.0)}});
  CHECK_THROWS_AS(onestep_estimate(e, low, ds, 0.95), Error);

  // confidence level validation and nesting
  CHECK_THROWS_AS(onestep_estimate(e, b, ds, 0.0), Error);
  CHECK_THROWS_AS(onestep_estimate(e, b, ds, 1.0), Error);
}

TEST_CASE("one-step equals plug-in plus the empirical correction") {
  DiscreteDist p = example_xay();
  for (FunctionalId id : {FunctionalId::MeanTreated, FunctionalId::AteContrast,
                          FunctionalId::ExpectedCondCov,
                          FunctionalId::StochasticIntervention}) {
    CatalogEntry e = get_entry(id);
    Dataset ds = sample_from(p, id, 400, 97);
    NuisanceBundle exact = bundle_from_dist(id, p);
    Estimate pi_est = plugin_estimate(e, exact, ds);
    Estimate os_est = onestep_estimate(e, exact, ds, 0.95);
    double corr = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
      Row r = row_view(ds, i);
      corr += e.uncentered_if(r, exact) - e.plugin_term(r, exact);
    }
    corr /= static_cast<double>(ds.n);
    CHECK(os_est.psi_hat == doctest::Approx(pi_est.psi_hat + corr).epsilon(1e-12));
  }
  // density: one-step equals 2 E_n[p_hat] - integral(p_hat^2) by definition
  Schema sz{{"z", 4}};
  DiscreteDist pz = DiscreteDist::from_raw(sz, {0.1, 0.2, 0.3, 0.4}, true);
  CatalogEntry ed = get_entry(FunctionalId::ExpectedDensity);
  NuisanceBundle bd = bundle_from_dist(ed.id, pz);
  Dataset dz = sample_from(pz, ed.id, 300, 12);
  Estimate de = onestep_estimate(ed, bd, dz, 0.95);
  double mean_p = 0.0;
  for (std::size_t i = 0; i < dz.n; ++i)
    mean_p += bd.at("dens", row_view(dz, i), 0);
  mean_p /= static_cast<double>(dz.n);
  CHECK(de.psi_hat ==
        doctest::Approx(2.0 * mean_p - bd.density_sq_integral).epsilon(1e-12));
}

TEST_CASE("one-step under a known randomized design is unbiased") {
  // pi == 0.5 known, mu_hat == 0: influence reduces to 2AY, whose mean is
  // E[2AY] = E[E(Y|X,A=1)] = psi; check the estimate lands within 3 se
  DiscreteDist p = xay_product(
      0.5, [](int) { return 0.5; },
      [](int x, int a) { return a == 1 ? 0.2 + 0.6 * x : 0.1 + 0.2 * x; });
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  double psi = e.truth(p);
  CHECK(psi == doctest::Approx(0.5).epsilon(1e-13));
  Dataset ds = sample_from(p, e.id, 4000, 314);
  auto b = const_bundle({{"pi", cval(0.5)}, {"mu", cval(0.0)}});
  Estimate os = onestep_estimate(e, b, ds, 0.95);
  CHECK(std::abs(os.psi_hat - psi) < 3.0 * os.se());
  CHECK(os.ci_lo <= os.psi_hat);
  CHECK(os.psi_hat <= os.ci_hi);
  // 90% interval nests inside the 95% one
  Estimate os90 = onestep_estimate(e, b, ds, 0.90);
  CHECK(os90.psi_hat == os.psi_hat);
  CHECK(os90.ci_lo > os.ci_lo);
  CHECK(os90.ci_hi < os.ci_hi);
}

TEST_CASE("one-step is invariant under row permutations") {
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::AteContrast);
  Dataset ds = sample_from(p, e.id, 500, 77);
  NuisanceBundle exact = bundle_from_dist(e.id, p);
  Estimate base = onestep_estimate(e, exact, ds, 0.95);
  std::vector<std::size_t> perm(ds.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(1);
  rng.shuffle(perm);
  Dataset shuffled = subset(ds, perm);
  Estimate permuted = onestep_estimate(e, exact, shuffled, 0.95);
  CHECK(permuted.psi_hat == doctest::Approx(base.psi_hat).epsilon(1e-12));
  CHECK(permuted.if_variance == doctest::Approx(base.if_variance).epsilon(1e-12));
}

TEST_CASE("cross-fit recovers a constant outcome exactly") {
  // Y == c: fold regressions of constant targets return c, residual terms
  // vanish, and every fold mean is exactly c
  std::size_t n = 200;
  Dataset ds;
  ds.n = n;
  ds.d = 1;
  ds.x.resize(n);
  ds.a.resize(n);
  ds.y.assign(n, 3.25);
  Rng rng(6);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x[i] = rng.uniform();
    ds.a[i] = rng.bernoulli(0.6) ? 1 : 0;
  }
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=20)")},
                                           {"mu", parse_learner("knn(k=10)")}};
  Estimate cf = crossfit_estimate(e, specs, ds, 4, 99, 0.95);
  CHECK(cf.psi_hat == 3.25);
  CHECK(cf.if_variance == 0.0);
  CHECK(cf.method == "crossfit");
  CHECK(cf.per_fold.size() == 4);
  for (auto& f : cf.per_fold) CHECK(f.psi_k == 3.25);
}

TEST_CASE("cross-fit aggregation, determinism, and fold structure") {
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  Dataset ds = sample_from(p, e.id, 603, 2024);  // n not divisible by K
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=150)")},
                                           {"mu", parse_learner("knn(k=80)")}};
  Estimate cf = crossfit_estimate(e, specs, ds, 5, 1234, 0.95);

  // Eq-16 identity: psi_hat is exactly the N_k/n weighted fold mean
  double agg = 0.0;
  std::size_t total = 0;
  std::size_t max_nk = 0, min_nk = ds.n;
  for (auto& f : cf.per_fold) {
    agg += static_cast<double>(f.n_k) / static_cast<double>(ds.n) * f.psi_k;
    total += f.n_k;
    max_nk = std::max(max_nk, f.n_k);
    min_nk = std::min(min_nk, f.n_k);
  }
  CHECK(agg == cf.psi_hat);
  CHECK(total == ds.n);
  CHECK(max_nk - min_nk <= 1);

  // determinism: bit-identical on repeat
  Estimate cf2 = crossfit_estimate(e, specs, ds, 5, 1234, 0.95);
  CHECK(cf2.psi_hat == cf.psi_hat);
  CHECK(cf2.if_variance == cf.if_variance);
  CHECK(cf2.ci_lo == cf.ci_lo);
  CHECK(cf2.ci_hi == cf.ci_hi);
  for (std::size_t k = 0; k < 5; ++k) CHECK(cf2.per_fold[k].psi_k == cf.per_fold[k].psi_k);
  // a different seed relocates folds
  Estimate cf3 = crossfit_estimate(e, specs, ds, 5, 4321, 0.95);
  CHECK(cf3.psi_hat != cf.psi_hat);

  // truth 0.5 should sit within 3 se for both K=2 and K=5
  Estimate k2 = crossfit_estimate(e, specs, ds, 2, 1234, 0.95);
  CHECK(std::abs(cf.psi_hat - 0.5) < 3.0 * cf.se());
  CHECK(std::abs(k2.psi_hat - 0.5) < 3.0 * k2.se());
}

TEST_CASE("cross-fit failure modes") {
  Dataset ds;
  ds.n = 40;
  ds.d = 1;
  ds.x.resize(40);
  ds.a.resize(40);
  ds.y.resize(40);
  Rng rng(3);
  for (std::size_t i = 0; i < 40; ++i) {
    ds.x[i] = rng.uniform();
    ds.a[i] = i % 2 == 0 ? 1 : 0;
    ds.y[i] = ds.x[i];
  }
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  // k = 30 exceeds the 20-row training complement at K = 2
  std::map<std::string, LearnerSpec> big{{"pi", parse_learner("knn(k=30)")},
                                         {"mu", parse_learner("knn(k=5)")}};
  CHECK_THROWS_AS(crossfit_estimate(e, big, ds, 2, 1, 0.95), Error);
  try {
    crossfit_estimate(e, big, ds, 2, 1, 0.95);
  } catch (const Error& err) {
    CHECK(err.code == Errc::FoldTooSmall);
  }
  std::map<std::string, LearnerSpec> ok{{"pi", parse_learner("knn(k=10)")},
                                        {"mu", parse_learner("knn(k=5)")}};
  CHECK_THROWS_AS(crossfit_estimate(e, ok, ds, 1, 1, 0.95), Error);   // K too small
  CHECK_THROWS_AS(crossfit_estimate(e, ok, ds, 41, 1, 0.95), Error);  // K > n
}

TEST_CASE("ratio estimator: proportional data give an exact zero-width answer") {
  // y = 2a rowwise makes every numerator influence exactly twice the
  // denominator influence (the outcome regressions see doubled targets),
  // so the estimating equation pins psi = 2 with a zero delta-method IF
  DiscreteDist pl = example_late();
  CatalogEntry e = get_entry(FunctionalId::LateRatio);
  Dataset ds = sample_from(pl, e.id, 240, 11);
  for (std::size_t i = 0; i < ds.n; ++i) ds.y[i] = 2.0 * ds.a[i];
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=40)")},
                                           {"mu", parse_learner("knn(k=20)")},
                                           {"eta", parse_learner("knn(k=20)")}};
  Estimate r = ratio_estimate(e, specs, ds, 3, 7, 0.95);
  CHECK(r.psi_hat == 2.0);
  CHECK(r.if_variance == 0.0);
  CHECK(r.ci_lo == 2.0);
  CHECK(r.ci_hi == 2.0);
}

TEST_CASE("ratio estimator recovers the instrument example") {
  DiscreteDist pl = example_late();
  CatalogEntry e = get_entry(FunctionalId::LateRatio);
  Dataset ds = sample_from(pl, e.id, 3000, 555);
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=500)")},
                                           {"mu", parse_learner("knn(k=250)")},
                                           {"eta", parse_learner("knn(k=250)")}};
  Estimate r = ratio_estimate(e, specs, ds, 5, 60, 0.95);
  CHECK(std::abs(r.psi_hat - 0.5) < 3.0 * r.se());
  CHECK(r.ci_lo < 0.5);
  CHECK(0.5 < r.ci_hi);
  CHECK(r.per_fold.size() == 5);

  // the generic cross-fit entry point must route ratio functionals here
  Estimate via_cf = crossfit_estimate(e, specs, ds, 5, 60, 0.95);
  CHECK(via_cf.psi_hat == r.psi_hat);
  CHECK(via_cf.if_variance == r.if_variance);

  // estimating-equation identity at the one-step level: with an exact
  // bundle, E_n[phi_num - psi_hat phi_den] = 0 to machine precision
  NuisanceBundle exact = bundle_from_dist(e.id, pl);
  Estimate os = onestep_estimate(e, exact, ds, 0.95);
  double resid = 0.0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    Row row = row_view(ds, i);
    resid += e.late_if_num(row, exact) - os.psi_hat * e.late_if_den(row, exact);
  }
  resid /= static_cast<double>(ds.n);
  CHECK(std::abs(resid) < 1e-12);

  // non-ratio entries are rejected
  CHECK_THROWS_AS(
      ratio_estimate(get_entry(FunctionalId::MeanTreated), specs, ds, 5, 60, 0.95),
      Error);
}

TEST_CASE("weak instruments trip the denominator floor") {
  // treatment never responds to the instrument: compliance difference is 0
  DiscreteDist pl = example_late();
  CatalogEntry e = get_entry(FunctionalId::LateRatio);
  Dataset ds = sample_from(pl, e.id, 400, 8);
  for (std::size_t i = 0; i < ds.n; ++i) ds.a[i] = 0;
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=80)")},
                                           {"mu", parse_learner("knn(k=40)")},
                                           {"eta", parse_learner("knn(k=40)")}};
  CHECK_THROWS_AS(ratio_estimate(e, specs, ds, 4, 2, 0.95), Error);
  try {
    ratio_estimate(e, specs, ds, 4, 2, 0.95);
  } catch (const Error& err) {
    CHECK(err.code == Errc::WeakDenominator);
  }
}

TEST_CASE("error decomposition: exact bundles isolate the sampling term") {
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  double psi = e.truth(p);
  Dataset ds = sample_from(p, e.id, 800, 41);
  FoldPlan plan = make_fold_plan(ds.n, 4, 17);
  NuisanceBundle exact = bundle_from_dist(e.id, p);
  std::vector<NuisanceBundle> bundles(4, exact);
  // remainder against itself would not short-circuit (copies), but the
  // closed form evaluates to 0 for identical values
  auto rem = [&](const NuisanceBundle& hat) { return e.remainder(hat, exact, p); };
  ErrorDecomposition d = decompose_error(e, bundles, plan, ds, exact, psi, rem);
  CHECK(std::abs(d.t2) < 1e-14);
  CHECK(std::abs(d.t1) < 1e-12);
  CHECK(d.psi_hat - psi == doctest::Approx(d.s_star).epsilon(1e-12));
  // the three terms always reassemble the error exactly (T1 is defined as
  // the residual, so this is an algebraic identity)
  CHECK(d.s_star + d.t1 + d.t2 ==
        doctest::Approx(d.psi_hat - d.psi_true).epsilon(1e-14));
}

TEST_CASE("error decomposition: exact propensity zeroes the remainder term") {
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  double psi = e.truth(p);
  Dataset ds = sample_from(p, e.id, 600, 4242);
  FoldPlan plan = make_fold_plan(ds.n, 3, 9);
  NuisanceBundle exact = bundle_from_dist(e.id, p);
  // per-fold bundles share the exact propensity but carry fold-specific
  // outcome-model errors
  std::vector<NuisanceBundle> bundles;
  for (int k = 0; k < 3; ++k) {
    NuisanceBundle b;
    b.fns = exact.fns;
    double shift = 0.05 * (k + 1);
    Fn mu = exact.fns.at("mu");
    b.fns["mu"] = [mu, shift](const Row& r, int sel) { return mu(r, sel) + shift; };
    bundles.push_back(std::move(b));
  }
  auto rem = [&](const NuisanceBundle& hat) { return e.remainder(hat, exact, p); };
  ErrorDecomposition d = decompose_error(e, bundles, plan, ds, exact, psi, rem);
  CHECK(d.t2 == 0.0);  // (pi/pi_hat - 1) vanishes pointwise
  CHECK(d.s_star + d.t1 + d.t2 ==
        doctest::Approx(d.psi_hat - d.psi_true).epsilon(1e-14));

  // permutation invariance of the aggregation: permute rows and carry the
  // fold assignment along
  std::vector<std::size_t> perm(ds.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng prng(123);
  prng.shuffle(perm);
  Dataset ds2 = subset(ds, perm);
  FoldPlan plan2 = plan;
  for (std::size_t i = 0; i < perm.size(); ++i)
    plan2.assignment[i] = plan.assignment[perm[i]];
  ErrorDecomposition d2 = decompose_error(e, bundles, plan2, ds2, exact, psi, rem);
  CHECK(d2.psi_hat == doctest::Approx(d.psi_hat).epsilon(1e-12));
  CHECK(d2.s_star == doctest::Approx(d.s_star).epsilon(1e-12));
}

TEST_CASE("error decomposition: known biased bundles show up in t2") {
  // covariance functional with both nuisances shifted +0.1: every fold's
  // remainder is exactly 0.01, so t2 = 0.01
  DiscreteDist p = example_xay();
  CatalogEntry e = get_entry(FunctionalId::ExpectedCondCov);
  double psi = e.truth(p);
  Dataset ds = sample_from(p, e.id, 500, 7);
  FoldPlan plan = make_fold_plan(ds.n, 2, 3);
  NuisanceBundle exact = bundle_from_dist(e.id, p);
  NuisanceBundle biased;
  biased.fns = exact.fns;
  Fn pi0 = exact.fns.at("pi"), mu0 = exact.fns.at("mu");
  biased.fns["pi"] = [pi0](const Row& r, int s) { return pi0(r, s) + 0.1; };
  biased.fns["mu"] = [mu0](const Row& r, int s) { return mu0(r, s) + 0.1; };
  std::vector<NuisanceBundle> bundles(2, biased);
  auto rem = [&](const NuisanceBundle& hat) { return e.remainder(hat, exact, p); };
  ErrorDecomposition d = decompose_error(e, bundles, plan, ds, exact, psi, rem);
  CHECK(d.t2 == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(d.s_star + d.t1 + d.t2 ==
        doctest::Approx(d.psi_hat - d.psi_true).epsilon(1e-14));

  // error paths
  CHECK_THROWS_AS(decompose_error(e, bundles, plan, ds, exact,
                                  std::numeric_limits<double>::quiet_NaN(), rem),
                  Error);
  std::vector<NuisanceBundle> wrong(3, biased);
  CHECK_THROWS_AS(decompose_error(e, wrong, plan, ds, exact, psi, rem), Error);
  CHECK_THROWS_AS(decompose_error(get_entry(FunctionalId::LateRatio), bundles, plan,
                                  ds, exact, psi, rem),
                  Error);
}

TEST_CASE("estimates carry clamp counts from range-constrained nuisances") {
  // sparse treated region forces the fitted propensity to clamp somewhere
  std::size_t n = 400;
  Dataset ds;
  ds.n = n;
  ds.d = 1;
  ds.x.resize(n);
  ds.a.assign(n, 0);
  ds.y.resize(n);
  Rng rng(19);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x[i] = rng.uniform();
    // treated only below x = 0.15, and rarely
    ds.a[i] = (ds.x[i] < 0.15 && rng.bernoulli(0.5)) ? 1 : 0;
    ds.y[i] = ds.x[i] + (ds.a[i] ? 0.5 : 0.0);
  }
  CatalogEntry e = get_entry(FunctionalId::MeanTreated);
  std::map<std::string, LearnerSpec> specs{{"pi", parse_learner("knn(k=25)")},
                                           {"mu", parse_learner("knn(k=5)")}};
  Estimate cf = crossfit_estimate(e, specs, ds, 2, 5, 0.95);
  CHECK(cf.clamp_events > 0);
}
