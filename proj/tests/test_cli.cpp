#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "longfuse/dataset.hpp"
#include "longfuse/simulation.hpp"

#ifndef LONGFUSE_CLI_PATH
#error "LONGFUSE_CLI_PATH must be defined"
#endif

using namespace longfuse;
using json = nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(LONGFUSE_CLI_PATH) + " " + args + " > cli_stdout.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_fixture(const std::string& path, Eigen::Index n1, Eigen::Index n0) {
  const auto data = sim::generate(sim::SimCase::by_id(7), n1, n0, 2024);
  write_csv(data, path);
}

}  // namespace

TEST_CASE("--help exits 0 and documents the flags") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("estimate --help") == 0);
  const auto text = slurp("cli_stdout.txt");
  for (const char* flag :
       {"--data", "--estimator", "--variance", "--bootstrap-b", "--alpha",
        "--seed", "--col-g", "--cols-s", "--cols-x", "--propensity-col",
        "--propensity-const", "--trim", "--threads", "--mu-x-arm-only",
        "--dr-guard", "--family", "--overlap-eps", "--out"}) {
    CHECK_MESSAGE(text.find(flag) != std::string::npos, flag);
  }
  CHECK(run_cli("simulate --help") == 0);
  const auto sim_text = slurp("cli_stdout.txt");
  for (const char* flag : {"--case", "--n1", "--n0", "--reps", "--seed",
                           "--bootstrap-b", "--estimators", "--out", "--force",
                           "--saturated"}) {
    CHECK_MESSAGE(sim_text.find(flag) != std::string::npos, flag);
  }
}

TEST_CASE("estimate end to end on a fused fixture") {
  make_fixture("cli_fixture.csv", 60, 600);
  const int code = run_cli(
      "estimate --data cli_fixture.csv --propensity-col e_true "
      "--estimator all --variance plugin --out cli_out.json");
  CHECK(code == 0);
  const auto j = json::parse(slurp("cli_out.json"));
  CHECK(j["n1"] == 60);
  CHECK(j["n0"] == 600);
  CHECK(j["outcome_family"] == "binary");
  CHECK(j.contains("manifest"));
  CHECK(j["manifest"]["command"] == "estimate");
  CHECK(j["manifest"]["inputs"].size() == 1);
  CHECK(j.contains("overlap"));
  REQUIRE(j["estimates"].size() == 4);
  for (const auto& est : j["estimates"]) {
    const double tau = est["tau_hat"];
    if (est.contains("p_value")) {
      const double p = est["p_value"];
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      CHECK(double(est["ci"][0]) <= tau);
      CHECK(tau <= double(est["ci"][1]));
    }
  }
  std::remove("cli_fixture.csv");
  std::remove("cli_out.json");
}

TEST_CASE("estimate accepts split RCT/observational files") {
  const auto data = sim::generate(sim::SimCase::by_id(1), 40, 120, 5);
  // Split into two files by hand.
  {
    std::ofstream rct("cli_rct.csv"), obs("cli_obs.csv");
    rct << "t,s1,x1,x2\n";
    obs << "t,y,s1,x1,x2\n";
    char buf[256];
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.g[i] == 1.0) {
        std::snprintf(buf, sizeof(buf), "%g,%.17g,%.17g,%.17g\n", data.t[i],
                      data.s(i, 0), data.x(i, 0), data.x(i, 1));
        rct << buf;
      } else {
        std::snprintf(buf, sizeof(buf), "%g,%.17g,%.17g,%.17g,%.17g\n", data.t[i],
                      data.y[i], data.s(i, 0), data.x(i, 0), data.x(i, 1));
        obs << buf;
      }
    }
  }
  const int code = run_cli(
      "estimate --rct cli_rct.csv --obs cli_obs.csv --estimator dr "
      "--variance none --out cli_split.json");
  CHECK(code == 0);
  const auto j = json::parse(slurp("cli_split.json"));
  CHECK(j["n1"] == 40);
  CHECK(j["n0"] == 120);
  std::remove("cli_rct.csv");
  std::remove("cli_obs.csv");
  std::remove("cli_split.json");
}

TEST_CASE("usage errors exit with code 2") {
  make_fixture("cli_fixture.csv", 30, 90);
  SUBCASE("ipw-true without a propensity source") {
    // Strip the propensity column by rewriting without it.
    const auto data = load_csv("cli_fixture.csv", [] {
      ColumnSchema s;
      s.propensity_col = "e_true";
      return s;
    }());
    auto stripped = data;
    stripped.known_propensity.reset();
    write_csv(stripped, "cli_noprop.csv");
    CHECK(run_cli("estimate --data cli_noprop.csv --estimator ipw-true") == 2);
    std::remove("cli_noprop.csv");
  }
  SUBCASE("alpha outside (0,1)") {
    CHECK(run_cli("estimate --data cli_fixture.csv --alpha 1.5") == 2);
  }
  SUBCASE("unknown case id") {
    CHECK(run_cli("simulate --case 99 --reps 2") == 2);
  }
  SUBCASE("missing file") {
    CHECK(run_cli("estimate --data does_not_exist.csv") == 2);
  }
  SUBCASE("resource guard") {
    CHECK(run_cli("simulate --case 1 --reps 100000 --bootstrap-b 2000") == 2);
  }
  std::remove("cli_fixture.csv");
}

TEST_CASE("fit errors exit with code 3") {
  // RCT treatment deterministic in x1 separates the propensity model.
  Eigen::MatrixXd x(30, 1), s(30, 1);
  Eigen::VectorXd t(30), g(30), y(30);
  for (int i = 0; i < 30; ++i) {
    x(i, 0) = (i % 10) - 4.5;
    s(i, 0) = 0.1 * i;
    g[i] = i < 20 ? 1.0 : 0.0;
    t[i] = g[i] == 1.0 ? (x(i, 0) > 0 ? 1.0 : 0.0) : i % 2;
    y[i] = g[i] == 1.0 ? FusedDataset::missing : (i % 2 ? 1.0 : 0.0);
  }
  write_csv(FusedDataset::make(x, s, t, g, y), "cli_sep.csv");
  CHECK(run_cli("estimate --data cli_sep.csv --estimator ipw --variance none") ==
        3);
  std::remove("cli_sep.csv");
}

TEST_CASE("simulate writes byte-identical outputs for identical flags") {
  const std::string flags =
      "simulate --case 1 --n1 60 --n0 150 --reps 8 --seed 9 --threads 2 --out ";
  CHECK(run_cli(flags + "cli_sim_a") == 0);
  CHECK(run_cli(flags + "cli_sim_b") == 0);
  const auto a = slurp("cli_sim_a.csv");
  const auto b = slurp("cli_sim_b.csv");
  CHECK(a == b);
  CHECK(!a.empty());
  CHECK(a.find("# longfuse-manifest:") == 0);
  CHECK(slurp("cli_sim_a.txt") == slurp("cli_sim_b.txt"));
  for (const char* f : {"cli_sim_a.csv", "cli_sim_b.csv", "cli_sim_a.txt",
                        "cli_sim_b.txt"}) {
    std::remove(f);
  }
}
