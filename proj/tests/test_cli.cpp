#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

const std::string kCli = DTR_CLI_PATH;
const std::string kData = DTR_DATA_DIR;
const std::string kTmp = "/tmp/dtr_cli_test";

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct Setup {
  Setup() {
    if (std::system(("mkdir -p " + kTmp).c_str()) != 0) std::abort();
  }
};
const Setup setup;

}  // namespace

TEST_CASE("simulate twice with the same seed is byte-identical") {
  const std::string sc = kData + "/scenarios/randomized_k1.json";
  REQUIRE(run("simulate --scenario " + sc + " --n 200 --seed 42 --out " + kTmp + "/d1.csv") == 0);
  REQUIRE(run("simulate --scenario " + sc + " --n 200 --seed 42 --out " + kTmp + "/d2.csv") == 0);
  CHECK(slurp(kTmp + "/d1.csv") == slurp(kTmp + "/d2.csv"));
  REQUIRE(run("simulate --scenario " + sc + " --n 200 --seed 43 --out " + kTmp + "/d3.csv") == 0);
  CHECK(slurp(kTmp + "/d1.csv") != slurp(kTmp + "/d3.csv"));
}

TEST_CASE("fit then recommend produces the documented recs schema") {
  const std::string sc = kData + "/scenarios/confounded_k2.json";
  const std::string model = kData + "/models/confounded_k2.json";
  REQUIRE(run("simulate --scenario " + sc + " --n 2000 --seed 7 --out " + kTmp + "/d.csv") == 0);
  REQUIRE(run("fit --method qlearn --data " + kTmp + "/d.csv --model " + model + " --out " +
              kTmp + "/rq.json") == 0);
  REQUIRE(run("fit --method alearn --data " + kTmp + "/d.csv --model " + model + " --out " +
              kTmp + "/ra.json") == 0);

  write_file(kTmp + "/probe.csv", "id,s1_x\np1,-1.0\np2,0.0\np3,1.5\n");
  REQUIRE(run("recommend --regime " + kTmp + "/ra.json --covariates " + kTmp +
              "/probe.csv --out " + kTmp + "/recs.csv") == 0);
  const std::string recs = slurp(kTmp + "/recs.csv");
  CHECK(recs.find("id,stage,recommended_action,contrast_or_qgap,propensity_at_history") !=
        std::string::npos);
  // one row per probe plus comment and header lines
  CHECK(std::count(recs.begin(), recs.end(), '\n') == 5);
  CHECK(recs.rfind("# dtr ", 0) == 0);

  // rerun is byte-identical
  REQUIRE(run("recommend --regime " + kTmp + "/ra.json --covariates " + kTmp +
              "/probe.csv --out " + kTmp + "/recs2.csv") == 0);
  CHECK(slurp(kTmp + "/recs.csv") == slurp(kTmp + "/recs2.csv"));

  // stage-2 probes carry the realized stage-1 action; covariate columns may
  // appear in any order within a stage block
  write_file(kTmp + "/probe2.csv", "id,s1_x,a1,s2_aprev,s2_x\nq1,0.2,1,1,0.4\n");
  REQUIRE(run("recommend --regime " + kTmp + "/ra.json --covariates " + kTmp +
              "/probe2.csv --out " + kTmp + "/recs3.csv") == 0);
  CHECK(slurp(kTmp + "/recs3.csv").find("q1,2,") != std::string::npos);
}

TEST_CASE("evaluate accepts fitted, true, behavior, and constant regimes") {
  const std::string sc = kData + "/scenarios/confounded_k2.json";
  REQUIRE(run("evaluate --scenario " + sc + " --regime true --replicates 2000 --seed 5 --out " +
              kTmp + "/ev_true.json") == 0);
  REQUIRE(run("evaluate --scenario " + sc + " --regime behavior --replicates 2000 --seed 5 "
              "--out " + kTmp + "/ev_beh.json") == 0);
  REQUIRE(run("evaluate --scenario " + sc + " --regime const:0 --replicates 2000 --seed 5 "
              "--out " + kTmp + "/ev_c0.json") == 0);
  REQUIRE(run("evaluate --scenario " + sc + " --regime " + kTmp + "/ra.json "
              "--replicates 2000 --seed 5 --out " + kTmp + "/ev_fit.json") == 0);
  // determinism
  REQUIRE(run("evaluate --scenario " + sc + " --regime true --replicates 2000 --seed 5 --out " +
              kTmp + "/ev_true2.json") == 0);
  CHECK(slurp(kTmp + "/ev_true.json") == slurp(kTmp + "/ev_true2.json"));
}

TEST_CASE("bootstrap and report subcommands") {
  const std::string model = kData + "/models/randomized_k1.json";
  const std::string sc = kData + "/scenarios/randomized_k1.json";
  REQUIRE(run("simulate --scenario " + sc + " --n 150 --seed 3 --out " + kTmp + "/db.csv") == 0);
  write_file(kTmp + "/probe1.csv", "id,s1_x\np1,0.5\n");
  REQUIRE(run("bootstrap --method alearn --data " + kTmp + "/db.csv --model " + model +
              " --B 50 --alpha 0.1 --probes " + kTmp + "/probe1.csv --seed 9 --out " + kTmp +
              "/rep.json") == 0);
  REQUIRE(run("bootstrap --method alearn --data " + kTmp + "/db.csv --model " + model +
              " --B 50 --alpha 0.1 --probes " + kTmp + "/probe1.csv --seed 9 --out " + kTmp +
              "/rep2.json") == 0);
  CHECK(slurp(kTmp + "/rep.json") == slurp(kTmp + "/rep2.json"));
  REQUIRE(run("report --data " + kTmp + "/rep.json --out " + kTmp + "/rep.txt") == 0);
  CHECK(slurp(kTmp + "/rep.txt").find("method: alearn") != std::string::npos);
}

TEST_CASE("screen subcommand ranks terms") {
  const std::string sc = kData + "/scenarios/confounded_k2.json";
  REQUIRE(run("simulate --scenario " + sc + " --n 3000 --seed 11 --out " + kTmp + "/ds.csv") ==
          0);
  REQUIRE(run("screen --data " + kTmp + "/ds.csv --terms \"s1.x + s2.x + s2.aprev\" "
              "--threshold 5 --out " + kTmp + "/screen.json") == 0);
  const std::string text = slurp(kTmp + "/screen.json");
  CHECK(text.find("\"results\"") != std::string::npos);
  CHECK(text.find("s1.x") != std::string::npos);
}

TEST_CASE("full pipeline: the fitted regime closes most of the value gap") {
  const std::string sc = kData + "/scenarios/confounded_k2.json";
  const std::string model = kData + "/models/confounded_k2.json";
  REQUIRE(run("simulate --scenario " + sc + " --n 5000 --seed 77 --out " + kTmp + "/dp.csv") ==
          0);
  REQUIRE(run("fit --method qlearn --data " + kTmp + "/dp.csv --model " + model + " --out " +
              kTmp + "/rp.json") == 0);
  auto value_of = [&](const std::string& regime, const std::string& out) {
    REQUIRE(run("evaluate --scenario " + sc + " --regime " + regime +
                " --replicates 50000 --seed 99 --out " + out) == 0);
    const std::string text = slurp(out);
    const auto pos = text.find("\"value\": ");
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + 9));
  };
  const double v_true = value_of("true", kTmp + "/v_true.json");
  const double v_behavior = value_of("behavior", kTmp + "/v_beh.json");
  const double v_fit = value_of(kTmp + "/rp.json", kTmp + "/v_fit.json");
  CHECK(v_true > v_behavior);
  CHECK((v_fit - v_behavior) / (v_true - v_behavior) >= 0.9);
}

TEST_CASE("exit codes: usage errors are 2, data errors are 1") {
  CHECK(run("frobnicate") == 2);
  CHECK(run("simulate --n 10 --out /tmp/x.csv") == 2);  // missing required --scenario
  CHECK(run("simulate --scenario /nonexistent.json --n 10 --out " + kTmp + "/x.csv") == 1);
  CHECK(run("fit --method qlearn --data /nonexistent.csv --model " + kData +
            "/models/randomized_k1.json --out " + kTmp + "/x.json") == 1);
  // action outside declared space / malformed data
  write_file(kTmp + "/bad.csv", "id,s1_x,a1,y\nu1,0.5,oops,2\n");
  CHECK(run("fit --method qlearn --data " + kTmp + "/bad.csv --model " + kData +
            "/models/randomized_k1.json --out " + kTmp + "/x.json") == 1);
}
