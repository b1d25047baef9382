#pragma once
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "iflab/error.hpp"

namespace iflab {

// Ordered list of named finite-valued variables. Order matters: it fixes
// atom layout, lexicographic enumeration, and the JSON wire format.
struct Schema {
  struct Var {
    std::string name;
    int levels;
    bool operator==(const Var&) const = default;
  };
  std::vector<Var> vars;

  Schema() = default;
  Schema(std::initializer_list<std::pair<std::string, int>> vs) {
    for (auto& [n, l] : vs) vars.push_back({n, l});
  }

  int index_of(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t atom_count() const;
  bool operator==(const Schema&) const = default;
};

// One level per schema variable, in schema order. Lexicographic order over
// these vectors (first variable most significant) is the canonical atom
// order everywhere: mass storage, JSON, iteration.
using Atom = std::vector<int>;

// Partial assignment by variable name; used for marginals/conditioning.
using Assignment = std::vector<std::pair<std::string, int>>;

class DiscreteDist {
 public:
  static DiscreteDist from_raw(Schema schema, std::vector<double> masses,
                               bool validate);

  const Schema& schema() const { return schema_; }
  std::size_t size() const { return mass_.size(); }
  const std::vector<double>& masses() const { return mass_; }

  std::size_t flat_index(const Atom& a) const;
  Atom atom_at(std::size_t flat) const;
  double mass(const Atom& a) const { return mass_[flat_index(a)]; }
  double mass_at(std::size_t flat) const { return mass_[flat]; }

  bool operator==(const DiscreteDist&) const = default;

 private:
  DiscreteDist() = default;
  Schema schema_;
  std::vector<double> mass_;
};

// Builds a distribution from explicit (atom, mass) entries. Atoms absent
// from the list get mass zero. Errors: NegativeMass, SumNotOne (|sum-1| >
// 1e-12), DuplicateAtom, InvalidAtom for out-of-range coordinates.
DiscreteDist make_discrete(const Schema& schema,
                           const std::vector<std::pair<Atom, double>>& entries);

// (1-eps) P + eps * point mass at z, for eps in [0, 1].
DiscreteDist contaminate(const DiscreteDist& p, const Atom& z, double eps);

// P(partial assignment); empty assignment gives 1.
double marginal_mass(const DiscreteDist& p, const Assignment& given);

// E[g(Z) | given]. Throws ZeroConditioningMass when P(given) == 0.
double conditional_mean(const DiscreteDist& p,
                        const std::function<double(const Atom&)>& g,
                        const Assignment& given);

// Wire format:
// {"schema":[["x",2],["y",3]],"masses":[[[0,0],0.1], ...]}
// with every atom listed explicitly in lexicographic order.
std::string dist_to_json(const DiscreteDist& p);
DiscreteDist dist_from_json(const std::string& text);

}  // namespace iflab
