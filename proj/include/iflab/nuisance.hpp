#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "iflab/dataset.hpp"
#include "iflab/error.hpp"

namespace iflab {

// Learner specification grammar (CLI/config):
//   knn(k=25)              fixed-k nearest neighbours
//   knn(cv=5, grid=[5,10,25,50,100])   k chosen by CV
//   nw(h=0.1)              Nadaraya-Watson, gaussian kernel
//   nw(cv=5, grid=[0.05,0.1,0.2])      bandwidth chosen by CV
//   hist(bins=16)          partition regressogram
//   kde(h=silverman)       gaussian KDE, silverman = 1.06*sd*n^(-1/5)
//   kde(h=0.25)
struct LearnerSpec {
  enum class Kind { Knn, Nw, Hist, Kde };
  Kind kind = Kind::Knn;
  int k = 0;
  double h = 0.0;
  int bins = 0;
  bool silverman = false;
  bool cv = false;
  int cv_folds = 5;
  std::vector<double> grid;
  std::string text;  // original spelling, echoed in reports
};

LearnerSpec parse_learner(const std::string& text);

// Nonparametric regression fit. Features are standardized internally
// (subtract training mean, divide by training population standard
// deviation; constant features pass through unscaled). Prediction is
// deterministic and thread-safe; the optional clamp truncates output to
// [lo, hi] and counts every truncation through a shared counter.
struct RegressionFit {
  enum class Method { Knn, Nw, Hist };
  Method method = Method::Knn;
  std::size_t d = 0;
  std::size_t n = 0;
  int k = 0;
  double h = 0.0;
  int bins = 0;

  std::vector<double> mean, scale;     // per-feature standardization
  std::vector<double> feat;            // n*d standardized, training order
  std::vector<double> target;          // training order
  // 1-d fast path: training points sorted by feature value, plus running
  // target sums so any contiguous window averages in O(1)
  std::vector<double> sorted_x;
  std::vector<std::uint32_t> sorted_id;
  std::vector<double> sorted_prefix;
  // histogram bins
  double hist_lo = 0.0, hist_wid = 0.0;
  std::vector<double> bin_mean;
  std::vector<char> bin_used;
  double global_mean = 0.0;

  bool clamped = false;
  double clamp_lo = 0.0, clamp_hi = 0.0;
  std::shared_ptr<std::atomic<long long>> clamp_hits;

  double predict(const double* q) const;
  double predict1(double q) const { return predict(&q); }
};

// Gaussian kernel density estimate over a fixed support grid
// [min - 4h, max + 4h] with 2048 points.
struct DensityFit {
  double h = 0.0;
  double lo = 0.0, hi = 0.0;
  std::size_t grid_size = 2048;
  std::vector<double> xs;  // training points

  double predict(double t) const;
  double mass_integral() const;    // trapezoid of predict over the grid
  double square_integral() const;  // trapezoid of predict^2 over the grid
};

// X is row-major n*d. Ties in neighbour distance break toward the lowest
// training-row index.
RegressionFit fit_knn(const std::vector<double>& X, std::size_t d,
                      const std::vector<double>& targets, int k);
RegressionFit fit_kernel_regression(const std::vector<double>& X, std::size_t d,
                                    const std::vector<double>& targets, double h);
RegressionFit fit_histogram(const std::vector<double>& X, std::size_t d,
                            const std::vector<double>& targets, int bins);
DensityFit fit_density(const std::vector<double>& xs, double h);
double silverman_bandwidth(const std::vector<double>& xs);

// Returns the grid value minimizing K-fold CV mean squared error; exact
// ties break toward the smoother setting (larger k / larger h / fewer
// bins). The grid is interpreted per spec.kind (k, h, or bins).
double select_tuning_cv(const std::vector<double>& X, std::size_t d,
                        const std::vector<double>& targets, const LearnerSpec& spec,
                        const std::vector<double>& grid, int folds,
                        std::uint64_t seed);

// Fits according to a (possibly CV-tuned) spec in one call.
RegressionFit fit_spec(const std::vector<double>& X, std::size_t d,
                       const std::vector<double>& targets, const LearnerSpec& spec,
                       std::uint64_t seed);

RegressionFit clamp(RegressionFit fit, double lo, double hi,
                    std::shared_ptr<std::atomic<long long>> counter = nullptr);

}  // namespace iflab
