#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iflab/dataset.hpp"
#include "iflab/dist.hpp"
#include "iflab/nuisance.hpp"

namespace iflab {

enum class FunctionalId {
  MeanTreated,
  AteContrast,
  ExpectedCondCov,
  ExpectedDensity,
  StochasticIntervention,
  LateRatio,
  Gformula2t,
};

std::string functional_name(FunctionalId id);
FunctionalId functional_from_string(const std::string& name);
std::vector<FunctionalId> all_functionals();

// One named nuisance requirement.
struct NuisanceSpec {
  enum class Kind { CondMean, CondProb, Density };
  std::string name;
  Kind kind = Kind::CondMean;
  std::string inputs;  // human-readable role description
  bool ranged = false;
  double lo = 0.0, hi = 1.0;
  double floor = 0.0;  // positivity floor (> 0 for propensities in denominators)
};

struct NuisanceManifest {
  std::vector<NuisanceSpec> items;
  const NuisanceSpec* find(const std::string& name) const;
};

// Named evaluable nuisance functions. The int selector is entry-specific
// (a treatment or instrument level); entries that need no selector pass 0.
struct NuisanceBundle {
  std::map<std::string, std::function<double(const Row&, int)>> fns;
  // expected_density only: the quadrature of the fitted density squared
  double density_sq_integral = std::numeric_limits<double>::quiet_NaN();
  // set when evaluating a ratio functional's combined influence function
  double ratio_psi_num = std::numeric_limits<double>::quiet_NaN();
  double ratio_psi_den = std::numeric_limits<double>::quiet_NaN();
  std::shared_ptr<std::atomic<long long>> clamp_events;

  double at(const std::string& name, const Row& row, int sel) const;
  long long clamp_count() const { return clamp_events ? clamp_events->load() : 0; }
};

// Stochastic-intervention policy g(a|x), constant in x over binary a.
struct Policy {
  double g0 = 0.3;
  double g1 = 0.7;
};

// A registered functional: nuisance manifest, uncentered influence
// function, plug-in term, exact truth on discrete distributions, and a
// second-order remainder (closed form where available, otherwise the
// defining identity evaluated by exact summation).
struct CatalogEntry {
  FunctionalId id;
  std::string name;
  std::string description;
  NuisanceManifest manifest;
  Policy policy;                  // stochastic_intervention only
  double positivity_floor = 0.01;
  double denominator_floor = 0.05;  // ratio functionals

  double uncentered_if(const Row& row, const NuisanceBundle& b) const;
  double plugin_term(const Row& row, const NuisanceBundle& b) const;

  // late_ratio building blocks (uncentered IFs and plug-in terms of the
  // numerator / denominator sub-functionals)
  double late_if_num(const Row& row, const NuisanceBundle& b) const;
  double late_if_den(const Row& row, const NuisanceBundle& b) const;
  double late_plugin_num(const Row& row, const NuisanceBundle& b) const;
  double late_plugin_den(const Row& row, const NuisanceBundle& b) const;

  double truth(const DiscreteDist& p) const;
  bool has_closed_form_remainder() const;
  double remainder(const NuisanceBundle& hat, const NuisanceBundle& exact,
                   const DiscreteDist& p) const;

  // canonical DSL text of the functional under the discrete variable
  // conventions (see atom_row)
  std::string dsl_form() const;

  bool is_ratio() const { return id == FunctionalId::LateRatio; }
};

CatalogEntry get_entry(FunctionalId id);
CatalogEntry get_entry(const std::string& name);

std::string late_num_form();
std::string late_den_form();

// Discrete variable conventions, shared by truth(), bundle_from_dist()
// and the samplers that draw from discrete distributions:
//   mean_treated / ate_contrast / expected_cond_cov / stochastic:
//       schema (x, a, y); x level -> covariate value, y level -> outcome value
//   expected_density: schema (z); z level -> x1 value
//   late_ratio: schema (x, r, a, y)
//   gformula_2t: schema (x1, a1, x2, a2, y)
// A Row is materialized from an Atom with levels cast to real values.
struct OwnedRow {
  std::array<double, 4> xs{};
  std::array<double, 4> x2s{};
  Row row;
  OwnedRow() { rebind(); }
  OwnedRow(const OwnedRow& o) : xs(o.xs), x2s(o.x2s), row(o.row) { rebind(); }
  OwnedRow& operator=(const OwnedRow& o) {
    xs = o.xs;
    x2s = o.x2s;
    row = o.row;
    rebind();
    return *this;
  }

 private:
  void rebind() {
    row.x = xs.data();
    row.x2 = x2s.data();
  }
};

OwnedRow atom_row(FunctionalId id, const Schema& schema, const Atom& z);

// Exact nuisances computed from a discrete distribution.
NuisanceBundle bundle_from_dist(FunctionalId id, const DiscreteDist& p);

// Learned nuisances fitted on a training set. `specs` maps manifest names
// to learner specifications; every manifest item must be covered.
NuisanceBundle fit_bundle(const CatalogEntry& entry, const Dataset& train,
                          const std::map<std::string, LearnerSpec>& specs,
                          std::uint64_t seed);

// Closed-form remainder integrated against a covariate density (continuous
// populations). `exact` supplies the true nuisances; integration runs over
// [lo, hi] against x_density (for expected_density, over the outcome axis).
double remainder_quadrature(const CatalogEntry& entry, const NuisanceBundle& hat,
                            const NuisanceBundle& exact,
                            const std::function<double(double)>& x_density,
                            double lo, double hi, double tol = 1e-10);

// The pointwise closed-form remainder integrand at covariate value xv.
// Regression entries are weighted by x_density; the expected_density
// integrand is -(hat - exact)^2, unweighted. `hat` and `exact` must outlive
// the returned function (x_density is copied). QuadratureFailure for
// entries without a closed-form remainder.
std::function<double(double)> remainder_integrand(
    const CatalogEntry& entry, const NuisanceBundle& hat,
    const NuisanceBundle& exact, std::function<double(double)> x_density);

}  // namespace iflab
