#include "iflab/dist.hpp"

#include <cmath>
#include <cstddef>
#include <set>

#include <json.hpp>

namespace iflab {

int Schema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (vars[i].name == name) return static_cast<int>(i);
  fail(Errc::UnknownVariable, "no variable named '" + name + "'");
}

bool Schema::has(const std::string& name) const {
  for (auto& v : vars)
    if (v.name == name) return true;
  return false;
}

std::size_t Schema::atom_count() const {
  std::size_t n = 1;
  for (auto& v : vars) n *= static_cast<std::size_t>(v.levels);
  return n;
}

std::size_t DiscreteDist::flat_index(const Atom& a) const {
  if (a.size() != schema_.vars.size())
    fail(Errc::InvalidAtom, "atom arity does not match schema");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int L = schema_.vars[i].levels;
    if (a[i] < 0 || a[i] >= L)
      fail(Errc::InvalidAtom, "level out of range for '" + schema_.vars[i].name + "'");
    idx = idx * static_cast<std::size_t>(L) + static_cast<std::size_t>(a[i]);
  }
  return idx;
}

Atom DiscreteDist::atom_at(std::size_t flat) const {
  Atom a(schema_.vars.size(), 0);
  for (std::size_t i = schema_.vars.size(); i-- > 0;) {
    std::size_t L = static_cast<std::size_t>(schema_.vars[i].levels);
    a[i] = static_cast<int>(flat % L);
    flat /= L;
  }
  return a;
}

DiscreteDist DiscreteDist::from_raw(Schema schema, std::vector<double> masses,
                                    bool validate) {
  DiscreteDist d;
  d.schema_ = std::move(schema);
  d.mass_ = std::move(masses);
  if (d.mass_.size() != d.schema_.atom_count())
    fail(Errc::InvalidAtom, "mass vector size does not match schema");
  if (validate) {
    double sum = 0.0;
    for (double m : d.mass_) {
      if (m < 0.0) fail(Errc::NegativeMass, "negative mass entry");
      sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      fail(Errc::SumNotOne, "masses sum to " + std::to_string(sum));
  }
  return d;
}

DiscreteDist make_discrete(const Schema& schema,
                           const std::vector<std::pair<Atom, double>>& entries) {
  if (schema.vars.empty()) fail(Errc::InvalidAtom, "schema has no variables");
  std::vector<double> masses(schema.atom_count(), 0.0);
  // flat_index needs an instance; build an empty shell first
  DiscreteDist shell = DiscreteDist::from_raw(schema, masses, false);
  std::set<std::size_t> seen;
  for (auto& [atom, m] : entries) {
    std::size_t idx = shell.flat_index(atom);
    if (!seen.insert(idx).second) fail(Errc::DuplicateAtom, "atom listed twice");
    if (m < 0.0) fail(Errc::NegativeMass, "negative mass entry");
    masses[idx] = m;
  }
  return DiscreteDist::from_raw(schema, std::move(masses), true);
}

DiscreteDist contaminate(const DiscreteDist& p, const Atom& z, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    fail(Errc::EpsOutOfRange, "eps must lie in [0,1]");
  std::size_t zi = p.flat_index(z);
  std::vector<double> m(p.masses());
  for (double& v : m) v *= (1.0 - eps);
  m[zi] += eps;
  return DiscreteDist::from_raw(p.schema(), std::move(m), false);
}

namespace {

std::vector<std::pair<int, int>> resolve(const Schema& s, const Assignment& given) {
  std::vector<std::pair<int, int>> out;
  std::set<int> used;
  for (auto& [name, level] : given) {
    int i = s.index_of(name);
    if (!used.insert(i).second)
      fail(Errc::DuplicateAtom, "variable '" + name + "' assigned twice");
    if (level < 0 || level >= s.vars[i].levels)
      fail(Errc::InvalidAtom, "level out of range for '" + name + "'");
    out.push_back({i, level});
  }
  return out;
}

bool matches(const Atom& a, const std::vector<std::pair<int, int>>& cond) {
  for (auto& [i, lvl] : cond)
    if (a[i] != lvl) return false;
  return true;
}

}  // namespace

double marginal_mass(const DiscreteDist& p, const Assignment& given) {
  auto cond = resolve(p.schema(), given);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.mass_at(i) == 0.0) continue;
    if (matches(p.atom_at(i), cond)) sum += p.mass_at(i);
  }
  return sum;
}

double conditional_mean(const DiscreteDist& p,
                        const std::function<double(const Atom&)>& g,
                        const Assignment& given) {
  auto cond = resolve(p.schema(), given);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double m = p.mass_at(i);
    if (m == 0.0) continue;
    Atom a = p.atom_at(i);
    if (!matches(a, cond)) continue;
    den += m;
    num += m * g(a);
  }
  if (den == 0.0)
    fail(Errc::ZeroConditioningMass, "conditioning event has zero mass");
  return num / den;
}

std::string dist_to_json(const DiscreteDist& p) {
  nlohmann::json j;
  j["schema"] = nlohmann::json::array();
  for (auto& v : p.schema().vars) j["schema"].push_back({v.name, v.levels});
  j["masses"] = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); ++i)
    j["masses"].push_back({p.atom_at(i), p.mass_at(i)});
  return j.dump();
}

DiscreteDist dist_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(Errc::IoError, std::string("bad distribution JSON: ") + e.what());
  }
  if (!j.contains("schema") || !j.contains("masses"))
    fail(Errc::IoError, "distribution JSON needs 'schema' and 'masses'");
  Schema s;
  try {
    for (auto& v : j["schema"])
      s.vars.push_back({v.at(0).get<std::string>(), v.at(1).get<int>()});
  } catch (const std::exception& e) {
    fail(Errc::IoError, std::string("bad schema entry: ") + e.what());
  }
  std::vector<std::pair<Atom, double>> entries;
  try {
    for (auto& e : j["masses"])
      entries.push_back({e.at(0).get<Atom>(), e.at(1).get<double>()});
  } catch (const std::exception& e) {
    fail(Errc::IoError, std::string("bad mass entry: ") + e.what());
  }
  return make_discrete(s, entries);
}

}  // namespace iflab
