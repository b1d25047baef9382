// Command-line front end: derive | check | estimate | simulate | list.
//
// Exit codes: 0 success (and check/verdict pass), 1 a run that completed
// but failed its verdict or hit an estimator-level error, 2 usage or input
// loading errors. Every run prints a reproducibility block echoing the
// effective settings unless --quiet is given.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "iflab/catalog.hpp"
#include "iflab/dataset.hpp"
#include "iflab/derive.hpp"
#include "iflab/dgp.hpp"
#include "iflab/error.hpp"
#include "iflab/estimate.hpp"
#include "iflab/eval.hpp"
#include "iflab/expr.hpp"
#include "iflab/parser.hpp"
#include "iflab/report.hpp"
#include "iflab/rng.hpp"
#include "iflab/study.hpp"

namespace {

using iflab::Json;

// thrown by helpers that already know the exit code and have a message
struct CliExit {
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& msg) {
  throw CliExit{2, msg};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) usage_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) usage_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) usage_error("failed writing '" + path + "'");
}

void write_json(const std::string& path, const Json& j) {
  write_file(path, j.dump(2) + "\n");
}

// Loading / parsing / validation problems are usage errors (exit 2);
// errors raised while the verdict-producing computation runs are exit 1.
template <typename F>
auto load_phase(F&& f) {
  try {
    return f();
  } catch (const iflab::Error& e) {
    throw CliExit{2, e.what()};
  } catch (const Json::exception& e) {
    throw CliExit{2, std::string("json: ") + e.what()};
  }
}

template <typename F>
auto run_phase(F&& f) {
  try {
    return f();
  } catch (const iflab::Error& e) {
    throw CliExit{1, e.what()};
  }
}

struct GlobalFlags {
  std::uint64_t seed = 1;
  bool seed_set = false;
  int threads = 0;
  std::string out;
  bool quiet = false;
};

void apply_threads(const GlobalFlags& g) {
#ifdef _OPENMP
  if (g.threads > 0) omp_set_num_threads(g.threads);
#else
  (void)g;
#endif
}

void print_repro(const GlobalFlags& g, const std::string& command,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  if (g.quiet) return;
  std::cout << "reproducibility:\n";
  std::cout << "  command: " << command << "\n";
  for (const auto& [k, v] : kv) std::cout << "  " << k << ": " << v << "\n";
}

// every variable an expression mentions must exist in the declared schema
void check_vars_against_schema(const iflab::ExprPtr& e,
                               const iflab::Schema& schema) {
  if (!e) return;
  auto check_name = [&](const std::string& name) {
    if (!schema.has(name))
      iflab::fail(iflab::Errc::BadConfig, "expression references variable '" +
                                              name +
                                              "' absent from the schema");
  };
  if (e->kind == iflab::NodeKind::DataRef) check_name(e->name);
  for (const iflab::Assign& a : e->assigns) {
    check_name(a.var);
    if (a.arg.kind == iflab::ArgKind::Data) check_name(a.arg.name);
  }
  for (const iflab::Assign& a : e->given) {
    check_name(a.var);
    if (a.arg.kind == iflab::ArgKind::Data) check_name(a.arg.name);
  }
  check_vars_against_schema(e->a, schema);
  check_vars_against_schema(e->b, schema);
}

// ---------------------------------------------------------------------------

int run_derive(const GlobalFlags& g, const std::string& schema_text,
               const std::string& expr_text) {
  auto parsed = load_phase([&] {
    iflab::Schema schema =
        iflab::schema_from_json(Json::parse(schema_text));
    iflab::FunctionalExpr f = iflab::parse_functional(expr_text);
    check_vars_against_schema(f.root, schema);
    return f;
  });
  iflab::Derivation d = run_phase([&] { return iflab::derive_if(parsed); });
  std::string influence = iflab::render(d.influence.root);
  if (!g.out.empty())
    write_json(g.out, iflab::trace_to_json(expr_text, influence, d.trace));
  if (!g.quiet) {
    std::cout << "influence function:\n  " << influence << "\n";
    std::cout << "derivation steps: " << d.trace.steps.size() << "\n";
    if (!g.out.empty()) std::cout << "trace written to " << g.out << "\n";
  }
  print_repro(g, "derive",
              {{"schema", schema_text}, {"expr", expr_text}});
  return 0;
}

int run_check(const GlobalFlags& g, const std::string& expr_text,
              const std::string& dist_path, double tol) {
  if (!(tol > 0.0)) usage_error("--tol must be positive");
  auto inputs = load_phase([&] {
    iflab::DiscreteDist p = iflab::dist_from_json(read_file(dist_path));
    iflab::FunctionalExpr f = iflab::parse_functional(expr_text);
    check_vars_against_schema(f.root, p.schema());
    return std::make_pair(std::move(f), std::move(p));
  });
  iflab::CheckReport report = run_phase(
      [&] { return iflab::check_if(inputs.first, inputs.second, tol); });
  if (!g.out.empty()) write_json(g.out, iflab::check_to_json(report));
  if (!g.quiet) {
    std::cout << "influence function:\n  " << report.influence << "\n";
    std::cout << "max atom gap:        " << report.max_gap << "\n";
    std::cout << "mean-zero residual:  " << report.mean_zero_residual << "\n";
    std::cout << "verdict:             " << (report.pass ? "pass" : "FAIL")
              << " (tol " << report.tol << ")\n";
    if (!g.out.empty()) std::cout << "report written to " << g.out << "\n";
  }
  print_repro(g, "check",
              {{"expr", expr_text},
               {"dist", dist_path},
               {"tol", iflab::render_number(tol)}});
  return report.pass ? 0 : 1;
}

int run_estimate(const GlobalFlags& g, const std::string& functional,
                 const std::string& data_path, const std::string& estimator,
                 int folds, double level,
                 const std::map<std::string, std::string>& learner_texts) {
  if (folds < 2) usage_error("--folds must be at least 2");
  if (!(level > 0.0 && level < 1.0))
    usage_error("--level must lie strictly between 0 and 1");
  if (estimator != "crossfit" && estimator != "onestep" &&
      estimator != "plugin")
    usage_error("--estimator must be one of crossfit, onestep, plugin");

  auto inputs = load_phase([&] {
    iflab::CatalogEntry entry = iflab::get_entry(functional);
    iflab::Dataset data = iflab::read_csv(data_path);
    std::map<std::string, iflab::LearnerSpec> specs;
    for (const auto& [name, text] : learner_texts) {
      if (!entry.manifest.find(name))
        iflab::fail(iflab::Errc::BadConfig,
                    "functional " + entry.name + " has no nuisance '" + name +
                        "'; see `iflab list`");
      specs[name] = iflab::parse_learner(text);
    }
    for (const iflab::NuisanceSpec& s : entry.manifest.items)
      if (!specs.count(s.name))
        iflab::fail(iflab::Errc::BadConfig,
                    "missing --learner-" + s.name + " for functional " +
                        entry.name);
    return std::make_pair(std::move(entry), std::move(data));
  });
  const iflab::CatalogEntry& entry = inputs.first;
  const iflab::Dataset& data = inputs.second;
  std::map<std::string, iflab::LearnerSpec> specs;
  for (const auto& [name, text] : learner_texts)
    specs[name] = iflab::parse_learner(text);

  iflab::Estimate est = run_phase([&] {
    if (estimator == "crossfit")
      return iflab::crossfit_estimate(entry, specs, data, folds, g.seed,
                                      level);
    iflab::NuisanceBundle bundle =
        iflab::fit_bundle(entry, data, specs, g.seed);
    return estimator == "onestep"
               ? iflab::onestep_estimate(entry, bundle, data, level)
               : iflab::plugin_estimate(entry, bundle, data);
  });

  if (!g.out.empty())
    write_json(g.out,
               iflab::estimate_to_json(est, g.seed, folds, learner_texts));
  if (!g.quiet) {
    std::cout << "functional:   " << est.functional << "\n";
    std::cout << "n:            " << est.n << "\n";
    std::cout << "psi_hat:      " << iflab::render_number(est.psi_hat) << "\n";
    if (std::isfinite(est.se())) {
      std::cout << "se:           " << iflab::render_number(est.se()) << "\n";
      std::cout << "ci (" << iflab::render_number(100.0 * est.level)
                << "%):     [" << iflab::render_number(est.ci_lo) << ", "
                << iflab::render_number(est.ci_hi) << "]\n";
    } else {
      std::cout << "se:           none (plug-in)\n";
    }
    std::cout << "clamp events: " << est.clamp_events << "\n";
    for (const iflab::Estimate::Fold& f : est.per_fold)
      std::cout << "  fold " << f.fold << ": n_k " << f.n_k << ", psi_k "
                << iflab::render_number(f.psi_k) << "\n";
    if (!g.out.empty()) std::cout << "report written to " << g.out << "\n";
  }
  std::vector<std::pair<std::string, std::string>> kv = {
      {"functional", functional},
      {"data", data_path},
      {"estimator", estimator},
      {"folds", std::to_string(folds)},
      {"seed", std::to_string(g.seed)},
      {"level", iflab::render_number(level)}};
  for (const auto& [name, text] : learner_texts)
    kv.emplace_back("learner-" + name, text);
  print_repro(g, "estimate", kv);
  return 0;
}

int run_simulate(const GlobalFlags& g, const std::string& config_path,
                 const std::string& csv_path, const std::string& emit_dir) {
  iflab::StudyConfig config = load_phase([&] {
    iflab::StudyConfig c =
        iflab::study_config_from_json(Json::parse(read_file(config_path)));
    if (g.seed_set) c.seed = g.seed;
    return c;
  });

  iflab::StudyResult result;
  try {
    result = iflab::run_study(config);
  } catch (const iflab::Error& e) {
    // run_study throws only while validating the configuration; anything
    // per-replication is recorded in the result instead
    throw CliExit{2, e.what()};
  }

  if (!g.out.empty()) write_json(g.out, iflab::study_result_to_json(result));
  if (!csv_path.empty()) write_file(csv_path, iflab::records_csv(result));

  if (!emit_dir.empty()) {
    iflab::DgpSpec dgp = load_phase([&] { return iflab::get_dgp(config.dgp); });
    std::filesystem::create_directories(emit_dir);
    Json index;
    index["functional"] = result.functional;
    index["K"] = config.K;
    index["level"] = config.level;
    index["learners"] = Json(config.learners);
    Json files = Json::array();
    for (const iflab::RepRecord& rec : result.records) {
      char name[64];
      std::snprintf(name, sizeof name, "data_n%zu_rep%d.csv", rec.n, rec.rep);
      std::string path =
          (std::filesystem::path(emit_dir) / name).string();
      iflab::Dataset data = dgp.sample(rec.n, iflab::mix_seed(rec.seed, 1));
      iflab::write_csv(data, path);
      Json fj;
      fj["file"] = name;
      fj["n"] = rec.n;
      fj["rep"] = rec.rep;
      fj["replication_seed"] = rec.seed;
      fj["estimator_seed"] = iflab::mix_seed(rec.seed, 2);
      fj["psi_hat"] = std::isfinite(rec.psi_hat) ? Json(rec.psi_hat) : Json();
      files.push_back(std::move(fj));
    }
    index["files"] = std::move(files);
    write_json((std::filesystem::path(emit_dir) / "index.json").string(),
               index);
  }

  if (!g.quiet) {
    std::cout << "dgp:        " << config.dgp << "  (truth "
              << iflab::render_number(result.truth) << ")\n";
    std::cout << "estimator:  " << config.estimator << " / "
              << config.nuisances << "\n";
    for (const iflab::CellSummary& cell : result.cells) {
      std::cout << "n=" << cell.n << ": attempted " << cell.attempted
                << ", failed " << cell.failed << ", bias "
                << iflab::render_number(cell.bias) << ", sd "
                << iflab::render_number(cell.sd) << ", rmse*sqrt(n) "
                << iflab::render_number(cell.rmse_sqrt_n);
      if (std::isfinite(cell.coverage))
        std::cout << ", coverage " << iflab::render_number(cell.coverage);
      std::cout << "\n";
    }
    if (!g.out.empty()) std::cout << "result written to " << g.out << "\n";
    if (!csv_path.empty())
      std::cout << "records csv written to " << csv_path << "\n";
    if (!emit_dir.empty())
      std::cout << "datasets written to " << emit_dir << "\n";
  }
  print_repro(g, "simulate",
              {{"config", config_path},
               {"seed", std::to_string(config.seed)},
               {"threads", std::to_string(g.threads)}});
  return 0;
}

int run_list(const GlobalFlags& g) {
  Json j = iflab::list_to_json();
  if (!g.out.empty()) {
    write_json(g.out, j);
    if (!g.quiet) std::cout << "listing written to " << g.out << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"influence-function derivation, checking, estimation, and "
               "simulation for smooth statistical functionals"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  auto* seed_opt =
      app.add_option("--seed", g.seed, "master seed (commands default to 1)");
  app.add_option("--threads", g.threads,
                 "cap on parallel replication threads (0 = library default)")
      ->check(CLI::Range(0, 1 << 16));
  app.add_option("--out", g.out, "write the structured JSON document here");
  app.add_flag("--quiet", g.quiet, "suppress the human-readable summary");

  std::string schema_text, expr_text, dist_path, data_path, functional;
  std::string estimator = "crossfit";
  std::string config_path, csv_path, emit_dir;
  double tol = 1e-6, level = 0.95;
  int folds = 5;
  std::map<std::string, std::string> learner_texts;

  CLI::App* derive =
      app.add_subcommand("derive", "derive an influence function symbolically");
  derive->add_option("--schema", schema_text,
                     "JSON object of variable -> level count")
      ->required();
  derive->add_option("--expr", expr_text, "functional in the DSL")->required();

  CLI::App* check = app.add_subcommand(
      "check", "derive, then verify against the numerical pathwise "
               "derivative on a distribution");
  check->add_option("--expr", expr_text, "functional in the DSL")->required();
  check->add_option("--dist", dist_path, "distribution JSON file")->required();
  check->add_option("--tol", tol, "max allowed atom gap / mean-zero residual");

  CLI::App* estimate = app.add_subcommand(
      "estimate", "estimate a functional from a CSV dataset");
  estimate->add_option("--functional", functional, "catalog functional id")
      ->required();
  estimate->add_option("--data", data_path, "CSV dataset")->required();
  estimate->add_option("--estimator", estimator,
                       "crossfit (default), onestep, or plugin");
  estimate->add_option("--folds", folds, "cross-fitting folds (default 5)");
  estimate->add_option("--level", level, "confidence level (default 0.95)");
  for (const char* name : {"pi", "mu", "eta", "dens", "pi1", "pi2", "q1", "q2"})
    estimate->add_option_function<std::string>(
        std::string("--learner-") + name,
        [&learner_texts, name](const std::string& v) {
          learner_texts[name] = v;
        },
        std::string("learner spec for nuisance '") + name + "'");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "run a replicated sampling study from a config");
  simulate->add_option("--config", config_path, "study config JSON")
      ->required();
  simulate->add_option("--csv", csv_path,
                       "also write the per-replication records as CSV");
  simulate->add_option("--emit-data", emit_dir,
                       "write each replication's dataset as CSV plus an "
                       "index.json into this directory");

  app.add_subcommand("list",
                     "enumerate functionals, data-generating processes, and "
                     "the learner grammar as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << "run with --help for the flag grammar\n";
    return 2;
  }
  g.seed_set = seed_opt->count() > 0;
  apply_threads(g);

  try {
    if (app.got_subcommand("derive")) return run_derive(g, schema_text, expr_text);
    if (app.got_subcommand("check")) return run_check(g, expr_text, dist_path, tol);
    if (app.got_subcommand("estimate"))
      return run_estimate(g, functional, data_path, estimator, folds, level,
                          learner_texts);
    if (app.got_subcommand("simulate"))
      return run_simulate(g, config_path, csv_path, emit_dir);
    if (app.got_subcommand("list")) return run_list(g);
  } catch (const CliExit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
