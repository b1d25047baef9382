#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "iflab/dgp.hpp"
#include "iflab/estimate.hpp"

namespace iflab {

// Monte Carlo study configuration. `learners` maps manifest nuisance names
// to learner grammar strings (see parse_learner); it is required when
// nuisances == "learned" and ignored for "exact". The misspecification
// switch replaces a nuisance with a fixed wrong reference after fitting:
// "mu" forces mu-hat == 0, "pi" forces pi-hat == 1/2, "both" does both.
struct StudyConfig {
  std::string dgp;
  std::string estimator = "crossfit";  // "crossfit" | "onestep" | "plugin"
  std::string nuisances = "learned";   // "learned" | "exact"
  std::map<std::string, std::string> learners;
  std::vector<std::size_t> ns;
  int replications = 1;
  int K = 5;
  std::uint64_t seed = 1;
  double level = 0.95;
  std::string broken = "none";  // "none" | "mu" | "pi" | "both"
  bool decompose = false;       // record S*/T1/T2 (crossfit + learned only)
};

// One replication's outcome. Failed replications carry the error code name
// and NaN statistics; they are recorded, not fatal.
struct RepRecord {
  std::size_t n = 0;
  int rep = 0;
  std::uint64_t seed = 0;  // replication seed (data and estimator streams
                           // derive from it)
  bool ok = false;
  std::string error;
  double psi_hat = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  bool covered = false;
  long long clamp_events = 0;
  double s_star = std::numeric_limits<double>::quiet_NaN();
  double t1 = std::numeric_limits<double>::quiet_NaN();
  double t2 = std::numeric_limits<double>::quiet_NaN();
};

// Aggregates over one sample size. sd and rmse use the population divisor
// (the number of successful replications), which makes the decomposition
// rmse^2 = bias^2 + sd^2 an exact identity up to floating-point error.
// Interval statistics are NaN for the plug-in estimator (no interval).
struct CellSummary {
  std::size_t n = 0;
  int attempted = 0;
  int failed = 0;
  double failure_rate = 0.0;
  bool sd_defined = false;  // at least two successful replications
  double bias = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double rmse_sqrt_n = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double coverage_se = std::numeric_limits<double>::quiet_NaN();
  double mean_ci_width = std::numeric_limits<double>::quiet_NaN();
  double mean_abs_t1_sqrt_n = std::numeric_limits<double>::quiet_NaN();
  double median_abs_t1_sqrt_n = std::numeric_limits<double>::quiet_NaN();
  double mean_abs_t2_sqrt_n = std::numeric_limits<double>::quiet_NaN();
  double median_abs_t2_sqrt_n = std::numeric_limits<double>::quiet_NaN();
  double clamp_rate = 0.0;  // clamp events per evaluated row
};

struct StudyResult {
  StudyConfig config;
  std::string functional;
  double truth = 0.0;
  double efficient_variance = 0.0;
  std::vector<RepRecord> records;  // ordered by (n index, replication)
  std::vector<CellSummary> cells;  // one per configured n, in order
};

// Runs replications r = 0..R-1 for every configured n. Replication r at
// sample size n uses seed = replication_seed(config.seed, n, r); the data
// stream and the estimator stream are derived sub-seeds, so identical
// configs give identical results regardless of scheduling. Per-replication
// estimator failures (positivity, weak denominator, fold capacity) are
// recorded with their error code and reported through failure_rate.
// Configuration errors (unknown dgp, bad estimator name, n < 10K, missing
// learner spec) abort the study instead.
StudyResult run_study(const StudyConfig& config);

// Reference implementation: same loop, forced serial. Bit-identical to
// run_study; kept for tests and the scheduling benchmark.
StudyResult run_study_serial(const StudyConfig& config);

// Double-robustness experiment: cross-fit one-step vs full-sample plug-in
// on the same per-replication datasets, under a misspecification switch.
struct DrComparison {
  StudyResult onestep;
  StudyResult plugin;
  // cell-0 bias summaries (the experiment runs a single n)
  double onestep_bias = std::numeric_limits<double>::quiet_NaN();
  double plugin_bias = std::numeric_limits<double>::quiet_NaN();
};
DrComparison dr_experiment(const std::string& dgp_id, const std::string& broken,
                           std::size_t n, int replications, std::uint64_t seed,
                           const std::map<std::string, std::string>& learners,
                           int K = 5);

// Quadratic-remainder scaling probe: perturbs the exact nuisances along a
// fixed smooth shape, nuisance name -> amplitude, and evaluates the
// closed-form remainder by quadrature at each t. ratios[i] =
// remainders[i] / remainders[i+1]; halving t should give ratios near 4.
// When every remainder is below 1e-14 the direction does not move the
// remainder at all (a product form with one factor zero): exact_zero is set
// and ratios stay empty.
struct ScalingRecord {
  std::vector<double> ts;
  std::vector<double> remainders;
  std::vector<double> ratios;
  bool exact_zero = false;
};
ScalingRecord remainder_scaling(const CatalogEntry& entry, const DgpSpec& dgp,
                                const std::map<std::string, double>& direction,
                                const std::vector<double>& ts);

}  // namespace iflab
