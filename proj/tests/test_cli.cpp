#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflab/dataset.hpp"
#include "iflab/dgp.hpp"
#include "iflab/rng.hpp"

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path("/tmp") / "iflab_cli_test";

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

std::string shq(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'')
      q += "'\\''";
    else
      q += c;
  }
  q += "'";
  return q;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "cannot read " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(bool(out));
  out << content;
}

// run the binary through the shell, capturing exit code, stdout, stderr
RunResult run(const std::vector<std::string>& args) {
  static int counter = 0;
  fs::path out = kWork / ("stdout_" + std::to_string(counter) + ".txt");
  fs::path err = kWork / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  std::string cmd = shq(IFLAB_BIN);
  for (const std::string& a : args) cmd += " " + shq(a);
  cmd += " > " + shq(out.string()) + " 2> " + shq(err.string());
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// ---------------------------------------------------------------------------
// minimal JSON Schema subset validator: type, enum, required, properties,
// additionalProperties, items (uniform or tuple), additionalItems

bool type_matches(const std::string& t, const Json& doc) {
  if (t == "object") return doc.is_object();
  if (t == "array") return doc.is_array();
  if (t == "string") return doc.is_string();
  if (t == "boolean") return doc.is_boolean();
  if (t == "null") return doc.is_null();
  if (t == "integer") return doc.is_number_integer() || doc.is_number_unsigned();
  if (t == "number") return doc.is_number();
  return false;
}

void validate(const Json& schema, const Json& doc, const std::string& path) {
  if (schema.contains("type")) {
    const Json& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(t.get<std::string>(), doc);
    } else {
      for (const Json& one : t)
        if (type_matches(one.get<std::string>(), doc)) ok = true;
    }
    REQUIRE_MESSAGE(ok, path << ": type mismatch, got " << doc.dump());
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const Json& v : schema.at("enum"))
      if (v == doc) ok = true;
    REQUIRE_MESSAGE(ok, path << ": " << doc.dump() << " not in enum");
  }
  if (doc.is_object()) {
    if (schema.contains("required"))
      for (const Json& key : schema.at("required"))
        REQUIRE_MESSAGE(doc.contains(key.get<std::string>()),
                        path << ": missing required key "
                             << key.get<std::string>());
    const Json* props =
        schema.contains("properties") ? &schema.at("properties") : nullptr;
    for (const auto& [key, value] : doc.items()) {
      if (props && props->contains(key)) {
        validate(props->at(key), value, path + "." + key);
      } else if (schema.contains("additionalProperties")) {
        const Json& ap = schema.at("additionalProperties");
        if (ap.is_boolean()) {
          REQUIRE_MESSAGE(ap.get<bool>(),
                          path << ": unexpected key " << key);
        } else {
          validate(ap, value, path + "." + key);
        }
      }
    }
  }
  if (doc.is_array() && schema.contains("items")) {
    const Json& items = schema.at("items");
    if (items.is_array()) {
      if (schema.contains("additionalItems") &&
          schema.at("additionalItems").is_boolean() &&
          !schema.at("additionalItems").get<bool>())
        REQUIRE_MESSAGE(doc.size() <= items.size(),
                        path << ": tuple has extra items");
      for (std::size_t i = 0; i < doc.size() && i < items.size(); ++i)
        validate(items[i], doc[i], path + "[" + std::to_string(i) + "]");
    } else {
      for (std::size_t i = 0; i < doc.size(); ++i)
        validate(items, doc[i], path + "[" + std::to_string(i) + "]");
    }
  }
}

void validate_against(const std::string& schema_file, const Json& doc) {
  Json schema = Json::parse(slurp(fs::path(IFLAB_SCHEMA_DIR) / schema_file));
  validate(schema, doc, schema_file + ":$");
}

struct WorkDir {
  WorkDir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};
WorkDir work_dir_guard;

std::string ate_dist_json() {
  // strictly positive 3-variable distribution for check runs
  return R"({"schema":[["x",2],["a",2],["y",2]],)"
         R"("masses":[[[0,0,0],0.10],[[0,0,1],0.15],[[0,1,0],0.12],)"
         R"([[0,1,1],0.13],[[1,0,0],0.11],[[1,0,1],0.09],[[1,1,0],0.14],)"
         R"([[1,1,1],0.16]]})";
}

const std::string kAteExpr = "sum_x { (E[y|x=x,a=1]-E[y|x=x,a=0])*p(x=x) }";

std::string study_config_text(std::uint64_t seed) {
  Json j;
  j["dgp"] = "ate-smooth-1d";
  j["estimator"] = "crossfit";
  j["nuisances"] = "learned";
  j["learners"] =
      Json{{"pi", "knn(cv=5, grid=[10,25,50])"}, {"mu", "knn(cv=5, grid=[10,25,50])"}};
  j["ns"] = Json::array({150});
  j["replications"] = 3;
  j["K"] = 5;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (quoted) {
      if (c == '"')
        quoted = false;
      else
        cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

TEST_CASE("list enumerates the registry as valid JSON") {
  RunResult r = run({"list"});
  REQUIRE(r.code == 0);
  Json j = Json::parse(r.out);
  validate_against("list.schema.json", j);
  REQUIRE(j.at("functionals").size() == 7);
  REQUIRE(j.at("dgps").size() == 5);
  CHECK(j.at("functionals")[0].at("id") == "mean_treated");
  CHECK(j.at("learner_grammar").size() > 0);

  // --out writes the same document
  fs::path out = kWork / "list.json";
  RunResult r2 = run({"list", "--out", out.string(), "--quiet"});
  REQUIRE(r2.code == 0);
  CHECK(r2.out.empty());
  CHECK(Json::parse(slurp(out)) == j);
}

TEST_CASE("derive prints the influence function and writes a replayable trace") {
  fs::path out = kWork / "trace.json";
  RunResult r = run({"derive", "--schema", R"({"x":2,"a":2,"y":2})", "--expr",
                     kAteExpr, "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("influence function:") != std::string::npos);
  CHECK(r.out.find("psi") != std::string::npos);
  CHECK(r.out.find("reproducibility:") != std::string::npos);

  Json trace = Json::parse(slurp(out));
  validate_against("derivation_trace.schema.json", trace);
  CHECK(trace.at("input") == kAteExpr);
  const Json& steps = trace.at("steps");
  REQUIRE(steps.size() > 1);
  for (std::size_t i = 0; i + 1 < steps.size(); ++i)
    CHECK(steps[i].at("after") == steps[i + 1].at("before"));

  // variables outside the schema are a usage error
  RunResult bad = run({"derive", "--schema", R"({"x":2,"y":2})", "--expr",
                       kAteExpr});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("'a'") != std::string::npos);

  // malformed DSL is a usage error with a location
  RunResult syn = run({"derive", "--schema", R"({"x":2})", "--expr",
                       "sum_x { p(x=x) "});
  CHECK(syn.code == 2);
}

TEST_CASE("check passes a correct functional and fails a too-tight tolerance") {
  fs::path dist = kWork / "P.json";
  spit(dist, ate_dist_json());
  fs::path out = kWork / "check.json";

  RunResult ok =
      run({"check", "--expr", kAteExpr, "--dist", dist.string(), "--tol",
           "1e-6", "--out", out.string()});
  REQUIRE_MESSAGE(ok.code == 0, ok.err);
  Json report = Json::parse(slurp(out));
  validate_against("check_report.schema.json", report);
  CHECK(report.at("pass") == true);
  CHECK(report.at("max_gap").get<double>() < 1e-6);
  CHECK(report.at("rows").size() == 8);

  // same run at an impossible tolerance: completes, verdict fail, exit 1
  RunResult tight = run({"check", "--expr", kAteExpr, "--dist", dist.string(),
                         "--tol", "1e-15", "--out", out.string()});
  CHECK(tight.code == 1);
  CHECK(Json::parse(slurp(out)).at("pass") == false);
  CHECK(tight.out.find("FAIL") != std::string::npos);
}

TEST_CASE("check rejects a corrupted distribution with exit 2") {
  fs::path dist = kWork / "Pbad.json";
  std::string text = ate_dist_json();
  // scale every mass by 1.2 so they sum to 1.2
  Json j = Json::parse(text);
  for (Json& entry : j.at("masses"))
    entry[1] = entry[1].get<double>() * 1.2;
  spit(dist, j.dump());
  RunResult r =
      run({"check", "--expr", kAteExpr, "--dist", dist.string(), "--tol", "1e-6"});
  CHECK(r.code == 2);
  CHECK(r.err.find("SumNotOne") != std::string::npos);
}

TEST_CASE("usage errors exit 2 before any computation") {
  RunResult unknown_flag = run({"estimate", "--functional", "mean_treated",
                                "--no-such-flag", "1"});
  CHECK(unknown_flag.code == 2);

  RunResult no_sub = run({"--seed", "4"});
  CHECK(no_sub.code == 2);

  RunResult bad_fn = run({"estimate", "--functional", "frobnicate", "--data",
                          (kWork / "nothing.csv").string()});
  CHECK(bad_fn.code == 2);
}

TEST_CASE("simulate is byte-deterministic and its records CSV matches the JSON") {
  fs::path cfg = kWork / "study.json";
  spit(cfg, study_config_text(2026));
  fs::path out1 = kWork / "res1.json";
  fs::path out2 = kWork / "res2.json";
  fs::path csv = kWork / "recs.csv";

  RunResult r1 = run({"simulate", "--config", cfg.string(), "--out",
                      out1.string(), "--csv", csv.string(), "--quiet"});
  REQUIRE_MESSAGE(r1.code == 0, r1.err);
  RunResult r2 = run({"simulate", "--config", cfg.string(), "--out",
                      out2.string(), "--quiet"});
  REQUIRE(r2.code == 0);
  CHECK(slurp(out1) == slurp(out2));

  Json result = Json::parse(slurp(out1));
  validate_against("study_result.schema.json", result);
  const Json& records = result.at("records");
  REQUIRE(records.size() == 3);

  // CSV rows carry psi_hat at full precision
  std::istringstream lines(slurp(csv));
  std::string line;
  std::getline(lines, line);
  CHECK(line.rfind("n,rep,seed,ok,error,psi_hat", 0) == 0);
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    auto cells = split_csv_line(line);
    REQUIRE(cells.size() == 14);
    double psi_csv = std::strtod(cells[5].c_str(), nullptr);
    double psi_json = records[row].at("psi_hat").get<double>();
    CHECK(std::abs(psi_csv - psi_json) <= 1e-12 * std::abs(psi_json));
    ++row;
  }
  CHECK(row == records.size());

  // global --seed overrides the config seed
  RunResult r3 = run({"simulate", "--config", cfg.string(), "--out",
                      out2.string(), "--seed", "7", "--quiet"});
  REQUIRE(r3.code == 0);
  Json moved = Json::parse(slurp(out2));
  CHECK(moved.at("config").at("seed") == 7);
  CHECK(moved.at("records")[0].at("psi_hat") !=
        records[0].at("psi_hat"));
}

TEST_CASE("simulate rejects malformed configs with exit 2") {
  fs::path cfg = kWork / "bad.json";

  spit(cfg, R"({"dgp":"ate-smooth-1d","surprise":1})");
  RunResult unknown_key = run({"simulate", "--config", cfg.string()});
  CHECK(unknown_key.code == 2);
  CHECK(unknown_key.err.find("surprise") != std::string::npos);

  spit(cfg, R"({"dgp":"no-such-process"})");
  RunResult bad_dgp = run({"simulate", "--config", cfg.string()});
  CHECK(bad_dgp.code == 2);

  spit(cfg, "{not json");
  RunResult bad_json = run({"simulate", "--config", cfg.string()});
  CHECK(bad_json.code == 2);

  // valid JSON, invalid study shape (crossfit cannot take exact nuisances)
  Json j = Json::parse(study_config_text(5));
  j["nuisances"] = "exact";
  spit(cfg, j.dump());
  RunResult bad_combo = run({"simulate", "--config", cfg.string()});
  CHECK(bad_combo.code == 2);
}

TEST_CASE("estimate on an emitted dataset reproduces the in-study psi_hat") {
  fs::path cfg = kWork / "study_rt.json";
  spit(cfg, study_config_text(909090));
  fs::path dir = kWork / "emitted";
  fs::path res = kWork / "res_rt.json";
  RunResult sim = run({"simulate", "--config", cfg.string(), "--out",
                       res.string(), "--emit-data", dir.string(), "--quiet"});
  REQUIRE_MESSAGE(sim.code == 0, sim.err);

  Json index = Json::parse(slurp(dir / "index.json"));
  validate_against("data_index.schema.json", index);
  REQUIRE(index.at("files").size() == 3);

  for (const Json& f : index.at("files")) {
    fs::path report = kWork / "est_rt.json";
    RunResult est = run(
        {"estimate", "--functional", index.at("functional").get<std::string>(),
         "--data", (dir / f.at("file").get<std::string>()).string(),
         "--estimator", "crossfit", "--folds",
         std::to_string(index.at("K").get<int>()), "--seed",
         std::to_string(f.at("estimator_seed").get<std::uint64_t>()),
         "--level", std::to_string(index.at("level").get<double>()),
         "--learner-pi", index.at("learners").at("pi").get<std::string>(),
         "--learner-mu", index.at("learners").at("mu").get<std::string>(),
         "--out", report.string(), "--quiet"});
    REQUIRE_MESSAGE(est.code == 0, est.err);
    Json rj = Json::parse(slurp(report));
    validate_against("estimate_report.schema.json", rj);
    double cli_psi = rj.at("psi_hat").get<double>();
    double study_psi = f.at("psi_hat").get<double>();
    CHECK(std::abs(cli_psi - study_psi) <= 1e-12 * std::abs(study_psi));
    CHECK(rj.at("per_fold").size() == 5);
  }
}

TEST_CASE("estimate validates its flags and inputs") {
  // build a small treated-outcome dataset on disk
  iflab::DgpSpec dgp = iflab::get_dgp("ate-smooth-1d");
  iflab::Dataset data = dgp.sample(120, 5);
  fs::path csv = kWork / "small.csv";
  iflab::write_csv(data, csv.string());

  RunResult missing = run({"estimate", "--functional", "ate_contrast",
                           "--data", csv.string(), "--learner-pi", "knn(k=10)"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("learner-mu") != std::string::npos);

  RunResult grammar =
      run({"estimate", "--functional", "ate_contrast", "--data", csv.string(),
           "--learner-pi", "forest(trees=3)", "--learner-mu", "knn(k=10)"});
  CHECK(grammar.code == 2);

  RunResult folds =
      run({"estimate", "--functional", "ate_contrast", "--data", csv.string(),
           "--folds", "1", "--learner-pi", "knn(k=10)", "--learner-mu",
           "knn(k=10)"});
  CHECK(folds.code == 2);

  RunResult wrong_nuisance =
      run({"estimate", "--functional", "ate_contrast", "--data", csv.string(),
           "--learner-pi", "knn(k=10)", "--learner-mu", "knn(k=10)",
           "--learner-dens", "kde(h=0.2)"});
  CHECK(wrong_nuisance.code == 2);
  CHECK(wrong_nuisance.err.find("dens") != std::string::npos);

  // an estimator-level failure after clean loading exits 1
  RunResult too_big =
      run({"estimate", "--functional", "ate_contrast", "--data", csv.string(),
           "--learner-pi", "knn(k=500)", "--learner-mu", "knn(k=500)"});
  CHECK(too_big.code == 1);
  CHECK(too_big.err.find("FoldTooSmall") != std::string::npos);

  // happy path: onestep on the same data
  RunResult ok =
      run({"estimate", "--functional", "ate_contrast", "--data", csv.string(),
           "--estimator", "onestep", "--seed", "3", "--learner-pi",
           "knn(k=20)", "--learner-mu", "knn(k=20)"});
  REQUIRE_MESSAGE(ok.code == 0, ok.err);
  CHECK(ok.out.find("psi_hat") != std::string::npos);
  CHECK(ok.out.find("clamp events") != std::string::npos);
  CHECK(ok.out.find("reproducibility:") != std::string::npos);
}

TEST_CASE("quiet suppresses the summary but not the verdict") {
  fs::path dist = kWork / "P2.json";
  spit(dist, ate_dist_json());
  RunResult r = run({"check", "--expr", kAteExpr, "--dist", dist.string(),
                     "--tol", "1e-6", "--quiet"});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
}

TEST_CASE("config and dist inputs validate against the shipped schemas") {
  validate_against("study_config.schema.json",
                   Json::parse(study_config_text(1)));
  validate_against("dist.schema.json", Json::parse(ate_dist_json()));
}
