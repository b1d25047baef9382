#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iflab/catalog.hpp"
#include "iflab/dataset.hpp"
#include "iflab/dist.hpp"

namespace iflab {

// A registered data-generating process: a deterministic sampler, the true
// value of its target functional, the exact (analytic) nuisances, the
// variance of the efficient influence function under the truth, and a
// remainder evaluator for fitted nuisance bundles.
//
// Continuous designs integrate over the covariate support [x_lo, x_hi];
// discrete designs carry their full distribution and sum over the support.
struct DgpSpec {
  std::string id;
  FunctionalId functional;
  std::string description;

  double truth = 0.0;
  std::string truth_note;        // how the value was obtained
  double efficient_variance = 0.0;  // Var{phi(Z; P)} under the truth

  double x_lo = 0.0, x_hi = 1.0;            // covariate support (continuous)
  std::shared_ptr<const DiscreteDist> dist;  // non-null for discrete designs

  std::function<Dataset(std::size_t n, std::uint64_t seed)> sampler;
  std::function<NuisanceBundle()> exact_bundle;
  // Second-order remainder of a fitted bundle against this DGP's truth.
  // Continuous regression designs use fixed-grid integration of the
  // closed-form integrand (robust to piecewise-constant learners); the
  // density design uses adaptive quadrature (kernel fits are smooth);
  // discrete designs use exact summation.
  std::function<double(const NuisanceBundle&)> remainder;

  bool discrete() const { return dist != nullptr; }
  Dataset sample(std::size_t n, std::uint64_t seed) const {
    return sampler(n, seed);
  }
};

// Registered designs, in registration order:
//   ate-smooth-1d     mean_treated          smooth propensity/regression
//   ecc-randomized    expected_cond_cov     randomized treatment
//   density-gauss-mix expected_density      two-component normal mixture
//   late-binary       late_ratio            explicit compliance classes
//   gf-2t-binary      gformula_2t           explicit transition tables
DgpSpec get_dgp(const std::string& id);
std::vector<std::string> all_dgps();

// Draws n iid rows from a discrete distribution by CDF inversion over the
// canonical atom order, materialized under the shared variable conventions
// (see atom_row).
Dataset sample_discrete(FunctionalId id, const DiscreteDist& p, std::size_t n,
                        std::uint64_t seed);

}  // namespace iflab
