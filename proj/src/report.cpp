#include "iflab/report.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "iflab/dgp.hpp"
#include "iflab/error.hpp"

namespace iflab {

namespace {

// JSON has no NaN; absent statistics serialize as null.
Json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string kind_name(NuisanceSpec::Kind k) {
  switch (k) {
    case NuisanceSpec::Kind::CondMean: return "conditional-mean";
    case NuisanceSpec::Kind::CondProb: return "conditional-probability";
    case NuisanceSpec::Kind::Density: return "density";
  }
  return "unknown";
}

// full round-trip precision for CSV doubles
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

Json schema_to_json(const Schema& schema) {
  Json j = Json::object();
  for (const auto& v : schema.vars) j[v.name] = v.levels;
  return j;
}

Schema schema_from_json(const Json& j) {
  if (!j.is_object() || j.empty())
    fail(Errc::BadConfig,
         "schema must be a non-empty JSON object of name -> level count");
  Schema s;
  for (const auto& [name, levels] : j.items()) {
    if (!levels.is_number_integer() || levels.get<int>() < 2)
      fail(Errc::BadConfig, "schema variable '" + name +
                                "' needs an integer level count >= 2");
    s.vars.push_back({name, levels.get<int>()});
  }
  return s;
}

Json trace_to_json(const std::string& input, const std::string& influence,
                   const DerivationTrace& trace) {
  Json j;
  j["input"] = input;
  j["influence"] = influence;
  Json steps = Json::array();
  for (const TraceStep& s : trace.steps) {
    Json step;
    step["rule"] = s.rule;
    step["before"] = s.before;
    step["after"] = s.after;
    steps.push_back(std::move(step));
  }
  j["steps"] = std::move(steps);
  return j;
}

Json check_to_json(const CheckReport& report) {
  Json j;
  j["pass"] = report.pass;
  j["tol"] = report.tol;
  j["max_gap"] = num(report.max_gap);
  j["mean_zero_residual"] = num(report.mean_zero_residual);
  j["influence"] = report.influence;
  Json rows = Json::array();
  for (const CheckRow& r : report.rows) {
    Json row;
    row["z"] = r.z;
    row["symbolic"] = num(r.symbolic);
    row["oracle"] = num(r.oracle);
    row["gap"] = num(r.gap);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

Json estimate_to_json(const Estimate& est, std::uint64_t seed, int K,
                      const std::map<std::string, std::string>& learners) {
  Json j;
  j["functional"] = est.functional;
  j["n"] = est.n;
  j["K"] = K;
  j["seed"] = seed;
  j["psi_hat"] = num(est.psi_hat);
  j["se"] = num(est.se());
  j["ci"] = Json::array({num(est.ci_lo), num(est.ci_hi)});
  Json folds = Json::array();
  for (const Estimate::Fold& f : est.per_fold) {
    Json fj;
    fj["fold"] = f.fold;
    fj["n_k"] = f.n_k;
    fj["psi_k"] = num(f.psi_k);
    folds.push_back(std::move(fj));
  }
  j["per_fold"] = std::move(folds);
  j["clamp_events"] = est.clamp_events;
  j["learners"] = Json(learners);
  j["method"] = est.method;
  j["level"] = est.level;
  return j;
}

Json study_config_to_json(const StudyConfig& config) {
  Json j;
  j["dgp"] = config.dgp;
  j["estimator"] = config.estimator;
  j["nuisances"] = config.nuisances;
  j["learners"] = Json(config.learners);
  j["ns"] = config.ns;
  j["replications"] = config.replications;
  j["K"] = config.K;
  j["seed"] = config.seed;
  j["level"] = config.level;
  j["broken"] = config.broken;
  j["decompose"] = config.decompose;
  return j;
}

StudyConfig study_config_from_json(const Json& j) {
  if (!j.is_object()) fail(Errc::BadConfig, "study config must be a JSON object");
  static const std::set<std::string> known = {
      "dgp",  "estimator",    "nuisances", "learners", "ns",       "replications",
      "K",    "seed",         "level",     "broken",   "decompose"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key))
      fail(Errc::BadConfig, "unknown study config key '" + key + "'");
  }
  StudyConfig c;
  try {
    if (!j.contains("dgp"))
      fail(Errc::BadConfig, "study config needs a 'dgp' key");
    c.dgp = j.at("dgp").get<std::string>();
    if (j.contains("estimator")) c.estimator = j.at("estimator").get<std::string>();
    if (j.contains("nuisances")) c.nuisances = j.at("nuisances").get<std::string>();
    if (j.contains("learners")) {
      for (const auto& [name, spec] : j.at("learners").items())
        c.learners[name] = spec.get<std::string>();
    }
    if (j.contains("ns")) c.ns = j.at("ns").get<std::vector<std::size_t>>();
    if (j.contains("replications")) c.replications = j.at("replications").get<int>();
    if (j.contains("K")) c.K = j.at("K").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("level")) c.level = j.at("level").get<double>();
    if (j.contains("broken")) c.broken = j.at("broken").get<std::string>();
    if (j.contains("decompose")) c.decompose = j.at("decompose").get<bool>();
  } catch (const Json::exception& e) {
    fail(Errc::BadConfig, std::string("malformed study config: ") + e.what());
  }
  return c;
}

namespace {

Json record_to_json(const RepRecord& r) {
  Json j;
  j["n"] = r.n;
  j["rep"] = r.rep;
  j["seed"] = r.seed;
  j["ok"] = r.ok;
  j["error"] = r.error;
  j["psi_hat"] = num(r.psi_hat);
  j["se"] = num(r.se);
  j["ci_lo"] = num(r.ci_lo);
  j["ci_hi"] = num(r.ci_hi);
  j["covered"] = r.covered;
  j["clamp_events"] = r.clamp_events;
  j["s_star"] = num(r.s_star);
  j["t1"] = num(r.t1);
  j["t2"] = num(r.t2);
  return j;
}

Json cell_to_json(const CellSummary& c) {
  Json j;
  j["n"] = c.n;
  j["attempted"] = c.attempted;
  j["failed"] = c.failed;
  j["failure_rate"] = num(c.failure_rate);
  j["sd_defined"] = c.sd_defined;
  j["bias"] = num(c.bias);
  j["sd"] = num(c.sd);
  j["rmse"] = num(c.rmse);
  j["rmse_sqrt_n"] = num(c.rmse_sqrt_n);
  j["coverage"] = num(c.coverage);
  j["coverage_se"] = num(c.coverage_se);
  j["mean_ci_width"] = num(c.mean_ci_width);
  j["mean_abs_t1_sqrt_n"] = num(c.mean_abs_t1_sqrt_n);
  j["median_abs_t1_sqrt_n"] = num(c.median_abs_t1_sqrt_n);
  j["mean_abs_t2_sqrt_n"] = num(c.mean_abs_t2_sqrt_n);
  j["median_abs_t2_sqrt_n"] = num(c.median_abs_t2_sqrt_n);
  j["clamp_rate"] = num(c.clamp_rate);
  return j;
}

}  // namespace

Json study_result_to_json(const StudyResult& result) {
  Json j;
  j["config"] = study_config_to_json(result.config);
  j["functional"] = result.functional;
  j["truth"] = num(result.truth);
  j["efficient_variance"] = num(result.efficient_variance);
  Json cells = Json::array();
  for (const CellSummary& c : result.cells) cells.push_back(cell_to_json(c));
  j["cells"] = std::move(cells);
  Json records = Json::array();
  for (const RepRecord& r : result.records) records.push_back(record_to_json(r));
  j["records"] = std::move(records);
  return j;
}

Json dr_to_json(const DrComparison& cmp) {
  Json j;
  j["onestep_bias"] = num(cmp.onestep_bias);
  j["plugin_bias"] = num(cmp.plugin_bias);
  j["onestep"] = study_result_to_json(cmp.onestep);
  j["plugin"] = study_result_to_json(cmp.plugin);
  return j;
}

Json scaling_to_json(const ScalingRecord& rec) {
  Json j;
  Json ts = Json::array();
  for (double t : rec.ts) ts.push_back(t);
  j["ts"] = std::move(ts);
  Json rems = Json::array();
  for (double r : rec.remainders) rems.push_back(num(r));
  j["remainders"] = std::move(rems);
  Json ratios = Json::array();
  for (double r : rec.ratios) ratios.push_back(num(r));
  j["ratios"] = std::move(ratios);
  j["exact_zero"] = rec.exact_zero;
  return j;
}

Json list_to_json() {
  Json j;
  Json fns = Json::array();
  for (FunctionalId id : all_functionals()) {
    CatalogEntry e = get_entry(id);
    Json f;
    f["id"] = e.name;
    f["description"] = e.description;
    f["dsl_form"] = e.dsl_form();
    f["ratio"] = e.is_ratio();
    f["closed_form_remainder"] = e.has_closed_form_remainder();
    Json manifest = Json::array();
    for (const NuisanceSpec& s : e.manifest.items) {
      Json m;
      m["name"] = s.name;
      m["kind"] = kind_name(s.kind);
      m["inputs"] = s.inputs;
      m["ranged"] = s.ranged;
      if (s.ranged) {
        m["lo"] = s.lo;
        m["hi"] = s.hi;
      }
      manifest.push_back(std::move(m));
    }
    f["nuisances"] = std::move(manifest);
    fns.push_back(std::move(f));
  }
  j["functionals"] = std::move(fns);

  Json dgps = Json::array();
  for (const std::string& id : all_dgps()) {
    DgpSpec d = get_dgp(id);
    Json g;
    g["id"] = d.id;
    g["functional"] = functional_name(d.functional);
    g["description"] = d.description;
    g["truth"] = d.truth;
    g["truth_note"] = d.truth_note;
    g["efficient_variance"] = d.efficient_variance;
    g["discrete"] = d.discrete();
    dgps.push_back(std::move(g));
  }
  j["dgps"] = std::move(dgps);

  j["learner_grammar"] = Json::array({"knn(k=25)",
                                      "knn(cv=5, grid=[5,10,25,50,100])",
                                      "nw(h=0.1)",
                                      "nw(cv=5, grid=[0.05,0.1,0.2])",
                                      "hist(bins=16)",
                                      "kde(h=silverman)",
                                      "kde(h=0.25)"});
  return j;
}

std::string records_csv(const StudyResult& result) {
  std::string out =
      "n,rep,seed,ok,error,psi_hat,se,ci_lo,ci_hi,covered,clamp_events,"
      "s_star,t1,t2\n";
  char head[64];
  for (const RepRecord& r : result.records) {
    std::snprintf(head, sizeof head, "%zu,%d,%" PRIu64 ",%d,", r.n, r.rep,
                  static_cast<std::uint64_t>(r.seed), r.ok ? 1 : 0);
    out += head;
    out += csv_escape(r.error);
    out += ',';
    out += fmt_double(r.psi_hat);
    out += ',';
    out += fmt_double(r.se);
    out += ',';
    out += fmt_double(r.ci_lo);
    out += ',';
    out += fmt_double(r.ci_hi);
    out += ',';
    out += r.covered ? '1' : '0';
    out += ',';
    out += std::to_string(r.clamp_events);
    out += ',';
    out += fmt_double(r.s_star);
    out += ',';
    out += fmt_double(r.t1);
    out += ',';
    out += fmt_double(r.t2);
    out += '\n';
  }
  return out;
}

}  // namespace iflab
