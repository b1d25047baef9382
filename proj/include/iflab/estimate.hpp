#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "iflab/catalog.hpp"
#include "iflab/dataset.hpp"
#include "iflab/folds.hpp"

namespace iflab {

// Point estimate with influence-function-based uncertainty.
//
// if_variance is the unbiased sample variance of the centered influence
// values; the Wald interval is psi_hat +/- z_{(1+level)/2} * sqrt(var/n).
// Plug-in estimates carry no influence-based interval: if_variance, ci_lo,
// ci_hi are NaN and level is 0.
struct Estimate {
  std::string method;      // "plugin" | "onestep" | "crossfit"
  std::string functional;
  double psi_hat = 0.0;
  double if_variance = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  double level = 0.0;
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();

  struct Fold {
    int fold;
    std::size_t n_k;
    double psi_k;
  };
  std::vector<Fold> per_fold;  // empty for single-bundle estimators

  // clamp-counter increments attributable to this estimate's evaluations
  long long clamp_events = 0;

  double se() const;  // sqrt(if_variance / n); NaN when variance is absent
};

// Inverse standard-normal CDF (Wichura's AS241, double precision).
// p must lie strictly in (0, 1); BadConfig otherwise.
double normal_quantile(double p);

// Kolmogorov-Smirnov distance between the empirical distribution of `values`
// and the standard normal: sup_t |F_n(t) - Phi(t)|. EmptyData on empty input.
double ks_statistic(std::vector<double> values);

// psi(P-hat) only. For averaged-regression entries this is the empirical
// mean of the outcome-model term; for the expected density it is the
// integral of the squared density estimate; for the ratio it is the ratio
// of the two plug-in means (denominator floor enforced).
Estimate plugin_estimate(const CatalogEntry& entry, const NuisanceBundle& bundle,
                         const Dataset& data);

// Bias-corrected estimate: the empirical mean of the uncentered influence
// function under `bundle`, with IF-based variance and Wald interval. For the
// ratio functional this solves the estimating equation
//   E_n[phi_num - psi * phi_den] = 0
// exactly (the ratio of the two one-step means) and uses the delta-method
// influence for the variance.
Estimate onestep_estimate(const CatalogEntry& entry, const NuisanceBundle& bundle,
                          const Dataset& data, double level = 0.95);

// Optional post-fit hook applied to each fold's fitted bundle before
// evaluation; used by misspecification experiments to force a nuisance to a
// wrong reference value (e.g. mu-hat == 0) while the others stay learned.
using BundleTransform = std::function<void(NuisanceBundle&)>;

// Fits one bundle per fold on the fold's training complement, exactly as
// the cross-fit estimators do (fold-k learners seeded seed ^ k), applying
// `transform` (when set) to each fitted bundle. Folds may fit in parallel;
// results are slot-ordered and deterministic. A learner that cannot fit
// inside a complement (k too large, or an arm subset empty) raises
// FoldTooSmall naming the fold.
std::vector<NuisanceBundle> crossfit_bundles(
    const CatalogEntry& entry, const std::map<std::string, LearnerSpec>& specs,
    const Dataset& data, const FoldPlan& plan, std::uint64_t seed,
    const BundleTransform& transform = {});

// Evaluation half of the cross-fit one-step: held-out influence means per
// fold, Eq-16 style N_k/n-weighted aggregation, pooled variance centered at
// the overall psi_hat. clamp_events reports the bundles' full counters
// (fitting plus evaluation). Non-ratio entries only.
Estimate crossfit_from_bundles(const CatalogEntry& entry,
                               const std::vector<NuisanceBundle>& bundles,
                               const FoldPlan& plan, const Dataset& data,
                               double level = 0.95);

// Cross-fit one-step: rows are split into K folds; all manifest nuisances
// are fitted on each fold's complement (sequential nuisances in their
// declared order) and the influence is evaluated on the held-out fold.
// psi_hat is the N_k/n-weighted fold mean; the variance pools centered
// influence values across folds around the overall psi_hat. Deterministic
// given (data order, K, seed): the fold plan uses `seed` and the fold-k
// learners use seed ^ k. Ratio functionals delegate to ratio_estimate
// (which rejects transforms). A learner that cannot fit inside a fold's
// complement (k too large, or an arm subset empty) raises FoldTooSmall
// naming the fold.
Estimate crossfit_estimate(const CatalogEntry& entry,
                           const std::map<std::string, LearnerSpec>& specs,
                           const Dataset& data, int K, std::uint64_t seed,
                           double level = 0.95,
                           const BundleTransform& transform = {});

// Cross-fit estimating-equation estimator for ratio functionals: one-step
// numerator and denominator share fold plans and fitted bundles, psi_hat =
// num/den (WeakDenominator below entry.denominator_floor), variance from the
// rowwise delta-method influence (phi_num - psi*phi_den)/den.
Estimate ratio_estimate(const CatalogEntry& entry,
                        const std::map<std::string, LearnerSpec>& specs,
                        const Dataset& data, int K, std::uint64_t seed,
                        double level = 0.95);

// Exact decomposition of the cross-fit estimation error psi_hat - psi into
//   s_star : centered empirical mean of the influence at the TRUE nuisances
//            (the sampling term, O_p(n^{-1/2}) with known variance)
//   t2     : N_k/n-weighted remainder of each fold bundle against the truth
//   t1     : the residual (empirical-process term), t1 = err - s_star - t2
// The three sum to psi_hat - psi exactly by construction. `remainder_fn`
// evaluates the second-order remainder of a fitted bundle against the true
// distribution (discrete summation or quadrature, supplied by the caller).
// Simulation-only: requires exact nuisances and the true psi.
struct ErrorDecomposition {
  double psi_hat;
  double psi_true;
  double s_star;
  double t1;
  double t2;
};

ErrorDecomposition decompose_error(
    const CatalogEntry& entry, const std::vector<NuisanceBundle>& fold_bundles,
    const FoldPlan& plan, const Dataset& data, const NuisanceBundle& exact,
    double psi_true,
    const std::function<double(const NuisanceBundle&)>& remainder_fn);

}  // namespace iflab
