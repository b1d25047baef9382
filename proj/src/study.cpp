#include "iflab/study.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "iflab/error.hpp"
#include "iflab/folds.hpp"
#include "iflab/rng.hpp"

namespace iflab {

namespace {

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kEstimatorStream = 2;

struct StudyContext {
  StudyConfig config;
  DgpSpec dgp;
  CatalogEntry entry;
  std::map<std::string, LearnerSpec> specs;
  BundleTransform transform;  // broken-nuisance override, may be empty
};

BundleTransform make_broken_transform(const std::string& broken) {
  if (broken == "none") return {};
  bool break_mu = broken == "mu" || broken == "both";
  bool break_pi = broken == "pi" || broken == "both";
  return [break_mu, break_pi](NuisanceBundle& b) {
    if (break_mu) b.fns["mu"] = [](const Row&, int) { return 0.0; };
    if (break_pi) b.fns["pi"] = [](const Row&, int) { return 0.5; };
  };
}

StudyContext validate(const StudyConfig& config) {
  StudyContext ctx;
  ctx.config = config;
  if (config.replications < 1)
    fail(Errc::BadConfig, "a study needs at least one replication");
  if (config.ns.empty())
    fail(Errc::BadConfig, "a study needs at least one sample size");
  if (config.K < 2)
    fail(Errc::BadConfig, "cross-fitting needs K >= 2");
  for (std::size_t n : config.ns)
    if (n < 10 * static_cast<std::size_t>(config.K))
      fail(Errc::BadConfig, "sample size " + std::to_string(n) +
                                " is below 10*K = " +
                                std::to_string(10 * config.K));
  if (config.estimator != "crossfit" && config.estimator != "onestep" &&
      config.estimator != "plugin")
    fail(Errc::BadConfig, "unknown estimator '" + config.estimator +
                              "' (crossfit | onestep | plugin)");
  if (config.nuisances != "learned" && config.nuisances != "exact")
    fail(Errc::BadConfig, "unknown nuisance mode '" + config.nuisances +
                              "' (learned | exact)");
  if (config.estimator == "crossfit" && config.nuisances == "exact")
    fail(Errc::BadConfig,
         "cross-fitting refits nuisances per fold; exact nuisances need no "
         "folds - use the onestep estimator");
  if (config.broken != "none" && config.broken != "mu" &&
      config.broken != "pi" && config.broken != "both")
    fail(Errc::BadConfig, "unknown misspecification switch '" + config.broken +
                              "' (none | mu | pi | both)");

  ctx.dgp = get_dgp(config.dgp);
  ctx.entry = get_entry(ctx.dgp.functional);

  if (config.broken != "none") {
    if (!ctx.entry.manifest.find("mu") || !ctx.entry.manifest.find("pi"))
      fail(Errc::BadConfig,
           "misspecification switches need a pi/mu nuisance pair; " +
               ctx.entry.name + " has none");
    if (ctx.entry.is_ratio())
      fail(Errc::BadConfig,
           "misspecification switches are not supported for ratio functionals");
  }
  ctx.transform = make_broken_transform(config.broken);

  if (config.nuisances == "learned") {
    for (const auto& item : ctx.entry.manifest.items) {
      auto it = config.learners.find(item.name);
      if (it == config.learners.end())
        fail(Errc::BadConfig, "no learner configured for nuisance '" +
                                  item.name + "' of " + ctx.entry.name);
      ctx.specs[item.name] = parse_learner(it->second);
    }
  }

  if (config.decompose) {
    if (config.estimator != "crossfit" || config.nuisances != "learned")
      fail(Errc::BadConfig,
           "the error decomposition tracks cross-fit learned nuisances; use "
           "estimator=crossfit, nuisances=learned");
    if (ctx.entry.is_ratio())
      fail(Errc::BadConfig,
           "error decomposition is provided for non-ratio entries");
  }
  return ctx;
}

RepRecord run_one(const StudyContext& ctx, std::size_t n, int rep) {
  RepRecord rec;
  rec.n = n;
  rec.rep = rep;
  rec.seed = replication_seed(ctx.config.seed, n,
                              static_cast<std::uint64_t>(rep));
  std::uint64_t data_seed = mix_seed(rec.seed, kDataStream);
  std::uint64_t est_seed = mix_seed(rec.seed, kEstimatorStream);
  try {
    Dataset data = ctx.dgp.sample(n, data_seed);
    Estimate est;
    if (ctx.config.estimator == "crossfit") {
      if (ctx.entry.is_ratio()) {
        est = ratio_estimate(ctx.entry, ctx.specs, data, ctx.config.K, est_seed,
                             ctx.config.level);
      } else {
        FoldPlan plan = make_fold_plan(data.n, ctx.config.K, est_seed);
        auto bundles = crossfit_bundles(ctx.entry, ctx.specs, data, plan,
                                        est_seed, ctx.transform);
        est = crossfit_from_bundles(ctx.entry, bundles, plan, data,
                                    ctx.config.level);
        if (ctx.config.decompose) {
          ErrorDecomposition dec = decompose_error(
              ctx.entry, bundles, plan, data, ctx.dgp.exact_bundle(),
              ctx.dgp.truth, ctx.dgp.remainder);
          rec.s_star = dec.s_star;
          rec.t1 = dec.t1;
          rec.t2 = dec.t2;
        }
      }
    } else {
      NuisanceBundle bundle =
          ctx.config.nuisances == "exact"
              ? ctx.dgp.exact_bundle()
              : fit_bundle(ctx.entry, data, ctx.specs, est_seed);
      if (ctx.transform) ctx.transform(bundle);
      est = ctx.config.estimator == "onestep"
                ? onestep_estimate(ctx.entry, bundle, data, ctx.config.level)
                : plugin_estimate(ctx.entry, bundle, data);
    }
    rec.ok = true;
    rec.psi_hat = est.psi_hat;
    rec.se = est.se();
    rec.ci_lo = est.ci_lo;
    rec.ci_hi = est.ci_hi;
    rec.covered = est.level > 0.0 && est.ci_lo <= ctx.dgp.truth &&
                  ctx.dgp.truth <= est.ci_hi;
    rec.clamp_events = est.clamp_events;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = errc_name(e.code);
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

CellSummary summarize(const StudyContext& ctx, std::size_t n,
                      const RepRecord* recs, int R) {
  CellSummary c;
  c.n = n;
  c.attempted = R;
  double truth = ctx.dgp.truth;
  double sqrt_n = std::sqrt(static_cast<double>(n));

  std::vector<double> psis, widths, t1s, t2s;
  long long clamps = 0;
  std::size_t rows = 0;
  int cover_hits = 0;
  for (int r = 0; r < R; ++r) {
    const RepRecord& rec = recs[r];
    if (!rec.ok) {
      ++c.failed;
      continue;
    }
    psis.push_back(rec.psi_hat);
    if (rec.covered) ++cover_hits;
    if (std::isfinite(rec.ci_hi - rec.ci_lo))
      widths.push_back(rec.ci_hi - rec.ci_lo);
    if (std::isfinite(rec.t1)) t1s.push_back(std::abs(rec.t1) * sqrt_n);
    if (std::isfinite(rec.t2)) t2s.push_back(std::abs(rec.t2) * sqrt_n);
    clamps += rec.clamp_events;
    rows += rec.n;
  }
  c.failure_rate = static_cast<double>(c.failed) / static_cast<double>(R);
  if (psis.empty()) return c;

  std::size_t m = psis.size();
  double dm = static_cast<double>(m);
  double mean = 0.0;
  for (double p : psis) mean += p;
  mean /= dm;
  c.bias = mean - truth;
  // population divisor so that rmse^2 = bias^2 + sd^2 holds exactly
  double ss_centered = 0.0, ss_error = 0.0;
  for (double p : psis) {
    ss_centered += (p - mean) * (p - mean);
    ss_error += (p - truth) * (p - truth);
  }
  c.sd_defined = m >= 2;
  c.sd = c.sd_defined ? std::sqrt(ss_centered / dm)
                      : std::numeric_limits<double>::quiet_NaN();
  c.rmse = std::sqrt(ss_error / dm);
  c.rmse_sqrt_n = c.rmse * sqrt_n;
  if (ctx.config.estimator != "plugin") {
    c.coverage = static_cast<double>(cover_hits) / dm;
    c.coverage_se = std::sqrt(c.coverage * (1.0 - c.coverage) / dm);
    if (!widths.empty()) {
      double w = 0.0;
      for (double v : widths) w += v;
      c.mean_ci_width = w / static_cast<double>(widths.size());
    }
  }
  if (!t1s.empty()) {
    double s1 = 0.0, s2 = 0.0;
    for (double v : t1s) s1 += v;
    for (double v : t2s) s2 += v;
    c.mean_abs_t1_sqrt_n = s1 / static_cast<double>(t1s.size());
    c.mean_abs_t2_sqrt_n = s2 / static_cast<double>(t2s.size());
    c.median_abs_t1_sqrt_n = median_of(t1s);
    c.median_abs_t2_sqrt_n = median_of(t2s);
  }
  c.clamp_rate = rows ? static_cast<double>(clamps) / static_cast<double>(rows)
                      : 0.0;
  return c;
}

StudyResult run_study_impl(const StudyConfig& config, bool parallel) {
  StudyContext ctx = validate(config);
  StudyResult out;
  out.config = config;
  out.functional = ctx.entry.name;
  out.truth = ctx.dgp.truth;
  out.efficient_variance = ctx.dgp.efficient_variance;

  const long long R = config.replications;
  const long long cells = static_cast<long long>(config.ns.size());
  const long long total = cells * R;
  out.records.resize(static_cast<std::size_t>(total));

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long long idx = 0; idx < total; ++idx) {
    std::size_t n = config.ns[static_cast<std::size_t>(idx / R)];
    int rep = static_cast<int>(idx % R);
    out.records[static_cast<std::size_t>(idx)] = run_one(ctx, n, rep);
  }

  for (long long ci = 0; ci < cells; ++ci)
    out.cells.push_back(summarize(ctx, config.ns[static_cast<std::size_t>(ci)],
                                  out.records.data() + ci * R,
                                  static_cast<int>(R)));
  return out;
}

}  // namespace

StudyResult run_study(const StudyConfig& config) {
  return run_study_impl(config, true);
}

StudyResult run_study_serial(const StudyConfig& config) {
  return run_study_impl(config, false);
}

DrComparison dr_experiment(const std::string& dgp_id, const std::string& broken,
                           std::size_t n, int replications, std::uint64_t seed,
                           const std::map<std::string, std::string>& learners,
                           int K) {
  StudyConfig base;
  base.dgp = dgp_id;
  base.nuisances = "learned";
  base.learners = learners;
  base.ns = {n};
  base.replications = replications;
  base.K = K;
  base.seed = seed;
  base.broken = broken;

  DrComparison cmp;
  StudyConfig one = base;
  one.estimator = "crossfit";
  cmp.onestep = run_study(one);
  // the data stream depends only on (seed, n, rep), so the plug-in arm sees
  // the same datasets replication by replication
  StudyConfig plug = base;
  plug.estimator = "plugin";
  cmp.plugin = run_study(plug);
  cmp.onestep_bias = cmp.onestep.cells.at(0).bias;
  cmp.plugin_bias = cmp.plugin.cells.at(0).bias;
  return cmp;
}

ScalingRecord remainder_scaling(const CatalogEntry& entry, const DgpSpec& dgp,
                                const std::map<std::string, double>& direction,
                                const std::vector<double>& ts) {
  if (entry.id != dgp.functional)
    fail(Errc::BadConfig, "entry " + entry.name + " does not match the " +
                              dgp.id + " design");
  if (!entry.has_closed_form_remainder())
    fail(Errc::BadConfig,
         "remainder scaling uses the closed-form quadrature; " + entry.name +
             " has none");
  if (dgp.discrete())
    fail(Errc::BadConfig,
         "remainder scaling probes continuous designs; discrete remainders "
         "are already exact sums");
  if (ts.empty()) fail(Errc::BadConfig, "need at least one step size t");
  double tmax = 0.0;
  for (double t : ts) {
    if (!(t > 0.0) || !(t <= 1.0))
      fail(Errc::BadConfig, "step sizes must lie in (0, 1]");
    tmax = std::max(tmax, t);
  }
  for (const auto& [name, amp] : direction) {
    const NuisanceSpec* item = entry.manifest.find(name);
    if (!item)
      fail(Errc::BadConfig,
           "direction names unknown nuisance '" + name + "'");
    if (!std::isfinite(amp) || std::abs(amp) > 0.5)
      fail(Errc::BadConfig, "direction amplitude for '" + name +
                                "' must be finite with |a| <= 0.5");
    // the perturbation shape has sup-norm 0.8; keep ranged nuisances
    // (propensities) inside their open range for every configured t
    if (item->ranged && std::abs(amp) * tmax * 0.8 > 0.25)
      fail(Errc::BadConfig, "direction on '" + name +
                                "' would push a ranged nuisance out of its "
                                "range; shrink t or the amplitude");
  }

  NuisanceBundle exact = dgp.exact_bundle();
  // fixed smooth shapes: a sine ripple for regressions/propensities, a
  // mass-preserving bump for densities
  auto ripple = [](double x) { return 0.2 + 0.6 * std::sin(2.5 * x + 0.4); };
  auto bump = [](double z) { return z * std::exp(-0.5 * z * z); };

  ScalingRecord rec;
  rec.ts = ts;
  for (double t : ts) {
    NuisanceBundle hat = dgp.exact_bundle();
    for (const auto& [name, amp] : direction) {
      const NuisanceSpec* item = entry.manifest.find(name);
      auto base = hat.fns.at(name);
      bool density_kind = item->kind == NuisanceSpec::Kind::Density;
      double scale = t * amp;
      hat.fns[name] = [base, scale, density_kind, ripple,
                       bump](const Row& r, int sel) {
        double s = density_kind ? bump(r.x[0]) : ripple(r.x[0]);
        return base(r, sel) + scale * s;
      };
    }
    rec.remainders.push_back(remainder_quadrature(
        entry, hat, exact, [](double) { return 1.0; }, dgp.x_lo, dgp.x_hi,
        1e-12));
  }
  bool all_zero = true;
  for (double r : rec.remainders)
    if (std::abs(r) >= 1e-14) all_zero = false;
  if (all_zero) {
    rec.exact_zero = true;
    return rec;
  }
  for (std::size_t i = 0; i + 1 < rec.remainders.size(); ++i)
    rec.ratios.push_back(rec.remainders[i] / rec.remainders[i + 1]);
  return rec;
}

}  // namespace iflab
