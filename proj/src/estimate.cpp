#include "iflab/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "iflab/rng.hpp"

namespace iflab {

double Estimate::se() const {
  if (!std::isfinite(if_variance) || n == 0)
    return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(if_variance / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// normal quantile, AS241 (Wichura 1988), double-precision branch

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    fail(Errc::BadConfig, "normal_quantile needs p strictly inside (0, 1)");
  const double q = p - 0.5;
  double r, val;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    val = q *
          (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                6.7265770927008700853e4) *
                   r +
               4.5921953931549871457e4) *
                  r +
              1.3731693765509461125e4) *
                 r +
             1.9715909503065514427e3) *
                r +
            1.3314166789178437745e2) *
               r +
           3.3871328727963666080e0) /
          (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                3.9307895800092710610e4) *
                   r +
               2.1213794301586595867e4) *
                  r +
              5.3941960214247511077e3) *
                 r +
             6.8718700749205790830e2) *
                r +
            4.2313330701600911252e1) *
               r +
           1.0);
    return val;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-9) * r +
                1.84631831751005468180e-6) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

double ks_statistic(std::vector<double> values) {
  if (values.empty()) fail(Errc::EmptyData, "ks_statistic needs at least one value");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double cdf = 0.5 * std::erfc(-values[i] / std::sqrt(2.0));
    double lo = cdf - static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n - cdf;
    d = std::max(d, std::max(lo, hi));
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace {

double check_level(double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(Errc::BadConfig, "confidence level must lie strictly inside (0, 1)");
  return normal_quantile(0.5 + level / 2.0);
}

// Neumaier-compensated sum: keeps degenerate cases (identical values) exact
// and makes aggregation accuracy independent of n.
double compensated_sum(const std::vector<double>& v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  return s + c;
}

double mean_of(const std::vector<double>& v) {
  return compensated_sum(v) / static_cast<double>(v.size());
}

// unbiased sample variance; a single observation carries no spread
double sample_variance(const std::vector<double>& v, double center) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - center) * (x - center);
  return s / static_cast<double>(v.size() - 1);
}

void attach_ci(Estimate& e, double level) {
  double z = check_level(level);
  e.level = level;
  double se = e.se();
  e.ci_lo = e.psi_hat - z * se;
  e.ci_hi = e.psi_hat + z * se;
}

void check_denominator(const CatalogEntry& entry, double den) {
  if (std::abs(den) <= entry.denominator_floor)
    fail(Errc::WeakDenominator,
         "denominator estimate " + std::to_string(den) + " is within the floor " +
             std::to_string(entry.denominator_floor) +
             "; the instrument is too weak for a stable ratio");
}

}  // namespace

std::vector<NuisanceBundle> crossfit_bundles(
    const CatalogEntry& entry, const std::map<std::string, LearnerSpec>& specs,
    const Dataset& data, const FoldPlan& plan, std::uint64_t seed,
    const BundleTransform& transform) {
  const int K = static_cast<int>(plan.K);
  std::vector<NuisanceBundle> out(static_cast<std::size_t>(K));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(K));
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < K; ++k) {
    try {
      Dataset train = subset(data, plan.complement_rows(k));
      NuisanceBundle b =
          fit_bundle(entry, train, specs, seed ^ static_cast<std::uint64_t>(k));
      if (transform) transform(b);
      out[static_cast<std::size_t>(k)] = std::move(b);
    } catch (...) {
      errs[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  // rethrow in ascending fold order, renaming learner-capacity failures
  for (int k = 0; k < K; ++k) {
    if (!errs[static_cast<std::size_t>(k)]) continue;
    try {
      std::rethrow_exception(errs[static_cast<std::size_t>(k)]);
    } catch (const Error& e) {
      if (e.code == Errc::KTooLarge || e.code == Errc::EmptyData)
        fail(Errc::FoldTooSmall, "fold " + std::to_string(k) +
                                     " training complement cannot support the "
                                     "learner: " +
                                     e.what());
      throw;
    }
  }
  return out;
}

Estimate plugin_estimate(const CatalogEntry& entry, const NuisanceBundle& bundle,
                         const Dataset& data) {
  data.validate();
  Estimate e;
  e.method = "plugin";
  e.functional = entry.name;
  e.n = data.n;
  long long before = bundle.clamp_count();
  if (entry.is_ratio()) {
    std::vector<double> num(data.n), den(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
      Row r = row_view(data, i);
      num[i] = entry.late_plugin_num(r, bundle);
      den[i] = entry.late_plugin_den(r, bundle);
    }
    double mden = mean_of(den);
    check_denominator(entry, mden);
    e.psi_hat = mean_of(num) / mden;
  } else if (entry.id == FunctionalId::ExpectedDensity) {
    // psi(P-hat) is the integral of the squared density estimate; it does
    // not depend on the evaluation rows at all
    if (!std::isfinite(bundle.density_sq_integral))
      fail(Errc::BadConfig, "density bundle lacks its square integral");
    e.psi_hat = bundle.density_sq_integral;
  } else {
    std::vector<double> terms(data.n);
    for (std::size_t i = 0; i < data.n; ++i)
      terms[i] = entry.plugin_term(row_view(data, i), bundle);
    e.psi_hat = mean_of(terms);
  }
  e.clamp_events = bundle.clamp_count() - before;
  return e;
}

Estimate onestep_estimate(const CatalogEntry& entry, const NuisanceBundle& bundle,
                          const Dataset& data, double level) {
  data.validate();
  check_level(level);
  Estimate e;
  e.method = "onestep";
  e.functional = entry.name;
  e.n = data.n;
  long long before = bundle.clamp_count();
  if (entry.is_ratio()) {
    std::vector<double> num(data.n), den(data.n);
    for (std::size_t i = 0; i < data.n; ++i) {
      Row r = row_view(data, i);
      num[i] = entry.late_if_num(r, bundle);
      den[i] = entry.late_if_den(r, bundle);
    }
    double psin = mean_of(num), psid = mean_of(den);
    check_denominator(entry, psid);
    e.psi_hat = psin / psid;
    std::vector<double> delta(data.n);
    for (std::size_t i = 0; i < data.n; ++i)
      delta[i] = (num[i] - e.psi_hat * den[i]) / psid;
    e.if_variance = sample_variance(delta, mean_of(delta));
  } else {
    std::vector<double> vals(data.n);
    for (std::size_t i = 0; i < data.n; ++i)
      vals[i] = entry.uncentered_if(row_view(data, i), bundle);
    e.psi_hat = mean_of(vals);
    e.if_variance = sample_variance(vals, e.psi_hat);
  }
  e.clamp_events = bundle.clamp_count() - before;
  attach_ci(e, level);
  return e;
}

Estimate crossfit_from_bundles(const CatalogEntry& entry,
                               const std::vector<NuisanceBundle>& bundles,
                               const FoldPlan& plan, const Dataset& data,
                               double level) {
  if (entry.is_ratio())
    fail(Errc::BadConfig,
         "ratio functionals aggregate through ratio_estimate, not fold means");
  data.validate();
  check_level(level);
  if (bundles.size() != plan.K)
    fail(Errc::BadConfig, "need one fitted bundle per fold");
  if (plan.assignment.size() != data.n)
    fail(Errc::BadConfig, "fold plan does not match the dataset");
  const int K = static_cast<int>(plan.K);

  std::vector<std::vector<double>> fold_vals(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const NuisanceBundle& b = bundles[static_cast<std::size_t>(k)];
    auto rows = plan.fold_rows(k);
    auto& vals = fold_vals[static_cast<std::size_t>(k)];
    vals.reserve(rows.size());
    for (std::size_t i : rows)
      vals.push_back(entry.uncentered_if(row_view(data, i), b));
  }

  Estimate e;
  e.method = "crossfit";
  e.functional = entry.name;
  e.n = data.n;
  // Eq-16 style aggregation: psi_hat = sum_k (N_k / n) * fold mean
  double psi = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& vals = fold_vals[static_cast<std::size_t>(k)];
    double mk = mean_of(vals);
    double wk = static_cast<double>(vals.size()) / static_cast<double>(data.n);
    psi += wk * mk;
    e.per_fold.push_back({k, vals.size(), mk});
    e.clamp_events += bundles[static_cast<std::size_t>(k)].clamp_count();
  }
  e.psi_hat = psi;
  // variance pools centered values across folds around the overall psi_hat
  double ss = 0.0;
  for (const auto& vals : fold_vals)
    for (double v : vals) ss += (v - psi) * (v - psi);
  e.if_variance = data.n >= 2 ? ss / static_cast<double>(data.n - 1) : 0.0;
  attach_ci(e, level);
  return e;
}

Estimate crossfit_estimate(const CatalogEntry& entry,
                           const std::map<std::string, LearnerSpec>& specs,
                           const Dataset& data, int K, std::uint64_t seed,
                           double level, const BundleTransform& transform) {
  if (entry.is_ratio()) {
    if (transform)
      fail(Errc::BadConfig,
           "nuisance transforms are not supported for ratio functionals");
    return ratio_estimate(entry, specs, data, K, seed, level);
  }
  data.validate();
  check_level(level);
  FoldPlan plan = make_fold_plan(data.n, K, seed);
  auto bundles = crossfit_bundles(entry, specs, data, plan, seed, transform);
  return crossfit_from_bundles(entry, bundles, plan, data, level);
}

Estimate ratio_estimate(const CatalogEntry& entry,
                        const std::map<std::string, LearnerSpec>& specs,
                        const Dataset& data, int K, std::uint64_t seed, double level) {
  if (!entry.is_ratio())
    fail(Errc::BadConfig, entry.name + " is not a ratio functional");
  data.validate();
  check_level(level);
  FoldPlan plan = make_fold_plan(data.n, K, seed);

  struct FoldVals {
    std::vector<double> num, den;
    long long clamps = 0;
  };
  std::vector<FoldVals> fv(static_cast<std::size_t>(K));
  auto bundles = crossfit_bundles(entry, specs, data, plan, seed);
  for (int k = 0; k < K; ++k) {
    const NuisanceBundle& b = bundles[static_cast<std::size_t>(k)];
    auto rows = plan.fold_rows(k);
    auto& f = fv[static_cast<std::size_t>(k)];
    f.num.reserve(rows.size());
    f.den.reserve(rows.size());
    for (std::size_t i : rows) {
      Row r = row_view(data, i);
      f.num.push_back(entry.late_if_num(r, b));
      f.den.push_back(entry.late_if_den(r, b));
    }
    f.clamps = b.clamp_count();
  }

  Estimate e;
  e.method = "crossfit";
  e.functional = entry.name;
  e.n = data.n;
  double psin = 0.0, psid = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& f = fv[static_cast<std::size_t>(k)];
    double wk = static_cast<double>(f.num.size()) / static_cast<double>(data.n);
    double nk = mean_of(f.num), dk = mean_of(f.den);
    psin += wk * nk;
    psid += wk * dk;
    // per-fold diagnostic: the fold-local estimating-equation solution
    double fold_psi = std::abs(dk) > entry.denominator_floor
                          ? nk / dk
                          : std::numeric_limits<double>::quiet_NaN();
    e.per_fold.push_back({k, f.num.size(), fold_psi});
    e.clamp_events += f.clamps;
  }
  check_denominator(entry, psid);
  e.psi_hat = psin / psid;
  std::vector<double> delta;
  delta.reserve(data.n);
  for (const auto& f : fv)
    for (std::size_t i = 0; i < f.num.size(); ++i)
      delta.push_back((f.num[i] - e.psi_hat * f.den[i]) / psid);
  e.if_variance = sample_variance(delta, mean_of(delta));
  attach_ci(e, level);
  return e;
}

ErrorDecomposition decompose_error(
    const CatalogEntry& entry, const std::vector<NuisanceBundle>& fold_bundles,
    const FoldPlan& plan, const Dataset& data, const NuisanceBundle& exact,
    double psi_true,
    const std::function<double(const NuisanceBundle&)>& remainder_fn) {
  if (entry.is_ratio())
    fail(Errc::BadConfig, "error decomposition is provided for non-ratio entries");
  data.validate();
  if (!std::isfinite(psi_true))
    fail(Errc::TruthUnavailable, "error decomposition needs the true value");
  if (fold_bundles.size() != static_cast<std::size_t>(plan.K))
    fail(Errc::BadConfig, "need one fitted bundle per fold");
  if (plan.assignment.size() != data.n)
    fail(Errc::BadConfig, "fold plan does not match the dataset");

  ErrorDecomposition d{};
  d.psi_true = psi_true;
  // cross-fit estimate under the provided bundles
  double psi_hat = 0.0;
  double t2 = 0.0;
  for (int k = 0; k < static_cast<int>(plan.K); ++k) {
    auto rows = plan.fold_rows(k);
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (std::size_t i : rows)
      vals.push_back(
          entry.uncentered_if(row_view(data, i), fold_bundles[static_cast<std::size_t>(k)]));
    double wk = static_cast<double>(rows.size()) / static_cast<double>(data.n);
    psi_hat += wk * mean_of(vals);
    t2 += wk * remainder_fn(fold_bundles[static_cast<std::size_t>(k)]);
  }
  d.psi_hat = psi_hat;
  d.t2 = t2;
  // sampling term at the true nuisances
  std::vector<double> sv(data.n);
  for (std::size_t i = 0; i < data.n; ++i)
    sv[i] = entry.uncentered_if(row_view(data, i), exact);
  d.s_star = mean_of(sv) - psi_true;
  d.t1 = (psi_hat - psi_true) - d.s_star - d.t2;
  return d;
}

}  // namespace iflab
