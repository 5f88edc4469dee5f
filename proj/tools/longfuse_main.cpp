#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "longfuse/dataset.hpp"
#include "longfuse/estimators.hpp"
#include "longfuse/inference.hpp"
#include "longfuse/simulation.hpp"
#include "longfuse/stats.hpp"
#include "longfuse/version.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace longfuse;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;  // usage or data errors
constexpr int kExitFit = 3;    // numerical / model-fit errors

// FNV-1a 64-bit digest of a file's bytes, for the run manifest.
std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

// Everything needed to reproduce a run. The timestamp comes from
// LONGFUSE_TIMESTAMP when set and stays empty otherwise, so outputs are
// byte-identical across reruns with equal flags.
json make_manifest(const std::string& command,
                   const std::map<std::string, std::string>& flags,
                   std::uint64_t seed,
                   const std::vector<std::string>& input_files) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  json f = json::object();
  for (const auto& [k, v] : flags) f[k] = v;
  m["flags"] = f;
  json inputs = json::object();
  for (const auto& path : input_files) inputs[path] = file_digest(path);
  m["inputs"] = inputs;
  const char* ts = std::getenv("LONGFUSE_TIMESTAMP");
  m["timestamp"] = ts ? ts : "";
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct EstimateArgs {
  std::string data_path, rct_path, obs_path;
  std::string estimator = "all";
  std::string variance = "plugin";
  int bootstrap_b = 200;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string col_g = "g", col_t = "t", col_y = "y";
  std::vector<std::string> cols_s, cols_x;
  std::string propensity_col;
  double propensity_const = -1.0;
  std::string family = "auto";
  double overlap_eps = 0.05;
  double trim = 0.0;
  double dr_guard = 0.15;
  bool mu_x_arm_only = false;
  int threads = 0;
};

struct SimulateArgs {
  int case_id = 1;
  long long n1 = 200, n0 = 500;
  int reps = 1000;
  int bootstrap_b = 0;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators;
  std::string out_prefix;
  bool saturated = false;
  int threads = 0;
  bool force = false;
  double alpha = 0.05;
  bool mu_x_arm_only = false;
  double trim = 0.0;
  double dr_guard = 0.15;
};

std::vector<EstimatorKind> parse_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorKind> kinds;
  for (const auto& name : names) {
    if (name == "all") {
      return {EstimatorKind::ipw_true, EstimatorKind::ipw_est, EstimatorKind::dr,
              EstimatorKind::surrogate_index};
    }
    auto kind = estimator_from_name(name);
    if (!kind) throw UsageError("unknown estimator '" + name + "'");
    kinds.push_back(*kind);
  }
  if (kinds.empty()) throw UsageError("no estimator selected");
  return kinds;
}

std::optional<Family> parse_family(const std::string& family) {
  if (family == "auto") return std::nullopt;
  if (family == "continuous") return Family::linear;
  if (family == "binary") return Family::logistic;
  throw UsageError("unknown family '" + family + "' (auto|continuous|binary)");
}

int cmd_estimate(const EstimateArgs& args) {
  if (!(args.alpha > 0.0 && args.alpha < 1.0)) {
    throw UsageError("--alpha must lie in (0,1)");
  }
  if (args.trim < 0.0 || args.trim >= 0.5) {
    throw UsageError("--trim must lie in [0, 0.5)");
  }
  const bool split = !args.rct_path.empty() || !args.obs_path.empty();
  if (split && (args.rct_path.empty() || args.obs_path.empty())) {
    throw UsageError("--rct and --obs must be given together");
  }
  if (split == !args.data_path.empty()) {
    throw UsageError("give either --data or both --rct and --obs");
  }

  ColumnSchema schema;
  schema.g = args.col_g;
  schema.t = args.col_t;
  schema.y = args.col_y;
  schema.s_cols = args.cols_s;
  schema.x_cols = args.cols_x;
  if (!args.propensity_col.empty()) schema.propensity_col = args.propensity_col;
  const auto family = parse_family(args.family);

  std::vector<std::string> inputs;
  FusedDataset data = [&] {
    if (!split) {
      inputs.push_back(args.data_path);
      return load_csv(args.data_path, schema);
    }
    inputs.push_back(args.rct_path);
    inputs.push_back(args.obs_path);
    ColumnSchema rct_schema = schema;
    rct_schema.implied_g = 1;
    ColumnSchema obs_schema = schema;
    obs_schema.implied_g = 0;
    return from_columns(concat(load_csv_columns(args.rct_path, rct_schema),
                               load_csv_columns(args.obs_path, obs_schema)));
  }();
  if (family) {
    // Re-validate under the requested family.
    data = FusedDataset::make(data.x, data.s, data.t, data.g, data.y, family,
                              data.known_propensity);
  }
  if (args.propensity_const > 0.0) {
    if (!(args.propensity_const < 1.0)) {
      throw UsageError("--propensity-const must lie in (0,1)");
    }
    data.known_propensity =
        Eigen::VectorXd::Constant(data.n(), args.propensity_const);
  }

  const auto kinds = parse_estimators({args.estimator});
  const bool needs_known =
      std::count(kinds.begin(), kinds.end(), EstimatorKind::ipw_true) > 0;
  if (needs_known && !data.known_propensity) {
    throw UsageError(
        "--estimator ipw-true requires --propensity-col or --propensity-const");
  }

  SuiteConfig suite;
  suite.estimators = kinds;
  suite.nuisance.mu_x_all_rct = !args.mu_x_arm_only;
  suite.estimator.trim = args.trim;
  suite.estimator.dr_weight_guard = args.dr_guard;
  suite.with_plugin_se = args.variance == "plugin";
  if (args.variance != "plugin" && args.variance != "bootstrap" &&
      args.variance != "none") {
    throw UsageError("--variance must be plugin, bootstrap or none");
  }

  const OverlapReport overlap = overlap_diagnostics(data, args.overlap_eps);
  const auto points = estimate_points(data, suite);

  std::optional<MultiBootstrap> boot;
  if (args.variance == "bootstrap") {
    BootstrapConfig bcfg;
    bcfg.b = args.bootstrap_b;
    bcfg.seed = args.seed;
    bcfg.threads = args.threads;
    SuiteConfig boot_suite = suite;
    boot_suite.with_plugin_se = false;
    boot = bootstrap_replicates(data, boot_suite, bcfg);
  }

  std::vector<TauEstimate> estimates;
  std::vector<std::string> failures;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const SuitePoint& point = points[j];
    if (!point.tau) {
      failures.push_back(std::string(estimator_name(point.estimator)) + ": " +
                         point.error);
      continue;
    }
    TauEstimate est;
    est.estimator = point.estimator;
    est.tau_hat = *point.tau;
    est.diagnostics = overlap;
    if (args.variance == "plugin") {
      if (point.se) {
        attach_wald(est, *point.se, args.alpha, VarianceMethod::plugin);
      } else {
        est.warnings.push_back("plug-in variance failed: " + point.se_error);
        failures.push_back(std::string(estimator_name(point.estimator)) +
                           " (variance): " + point.se_error);
      }
    } else if (args.variance == "bootstrap") {
      const int fails = boot->failures[j];
      if (fails > 0.2 * args.bootstrap_b) {
        failures.push_back(std::string(estimator_name(point.estimator)) +
                           " (bootstrap): " + std::to_string(fails) + " of " +
                           std::to_string(args.bootstrap_b) +
                           " replicates failed, first: " + boot->first_errors[j]);
      } else {
        std::vector<double> ok;
        for (int b = 0; b < args.bootstrap_b; ++b) {
          const double v = boot->replicates(b, static_cast<Eigen::Index>(j));
          if (!std::isnan(v)) ok.push_back(v);
        }
        const double se = sample_sd(Eigen::Map<Eigen::VectorXd>(
            ok.data(), static_cast<Eigen::Index>(ok.size())));
        attach_wald(est, se, args.alpha, VarianceMethod::bootstrap);
        if (fails > 0) {
          est.warnings.push_back(std::to_string(fails) +
                                 " bootstrap replicates failed and were dropped");
        }
      }
    }
    estimates.push_back(std::move(est));
  }

  // Human-readable summary.
  std::printf("n1=%lld n0=%lld outcome_family=%s\n",
              static_cast<long long>(data.n1), static_cast<long long>(data.n0),
              data.outcome_family == Family::logistic ? "binary" : "continuous");
  if (overlap.any_failure()) {
    std::printf("overlap: diagnostic fit failure (see JSON report)\n");
  } else {
    std::printf("overlap: %s (eps=%g)\n",
                overlap.any_violation() ? "VIOLATED" : "ok", args.overlap_eps);
  }
  std::printf("%-16s %12s %12s %26s %12s\n", "estimator", "tau_hat", "se",
              "ci", "p_value");
  for (const auto& est : estimates) {
    std::string ci = "--", se = "--", p = "--";
    if (est.se) se = fmt(*est.se);
    if (est.ci_low) ci = "[" + fmt(*est.ci_low) + ", " + fmt(*est.ci_high) + "]";
    if (est.p_value) p = fmt(*est.p_value);
    std::printf("%-16s %12s %12s %26s %12s\n", estimator_name(est.estimator),
                fmt(est.tau_hat).c_str(), se.c_str(), ci.c_str(), p.c_str());
    for (const auto& w : est.warnings) {
      std::printf("  warning: %s\n", w.c_str());
    }
  }
  for (const auto& f : failures) std::printf("error: %s\n", f.c_str());

  if (!args.out_path.empty()) {
    std::map<std::string, std::string> flags = {
        {"estimator", args.estimator},
        {"variance", args.variance},
        {"bootstrap-b", std::to_string(args.bootstrap_b)},
        {"alpha", fmt(args.alpha)},
        {"family", args.family},
        {"overlap-eps", fmt(args.overlap_eps)},
        {"trim", fmt(args.trim)},
        {"dr-guard", fmt(args.dr_guard)},
        {"mu-x-arm-only", args.mu_x_arm_only ? "true" : "false"},
    };
    if (!args.data_path.empty()) flags["data"] = args.data_path;
    if (!args.rct_path.empty()) flags["rct"] = args.rct_path;
    if (!args.obs_path.empty()) flags["obs"] = args.obs_path;
    if (!args.propensity_col.empty()) flags["propensity-col"] = args.propensity_col;
    if (args.propensity_const > 0.0) {
      flags["propensity-const"] = fmt(args.propensity_const);
    }
    json out;
    out["manifest"] = make_manifest("estimate", flags, args.seed, inputs);
    out["n1"] = data.n1;
    out["n0"] = data.n0;
    out["outcome_family"] =
        data.outcome_family == Family::logistic ? "binary" : "continuous";
    out["overlap"] = json::parse(to_json(overlap));
    json ests = json::array();
    for (const auto& est : estimates) {
      ests.push_back(json::parse(to_json(est, data.n1, data.n0)));
    }
    out["estimates"] = ests;
    if (!failures.empty()) out["failures"] = failures;
    std::ofstream os(args.out_path);
    if (!os) throw DataError("cannot write " + args.out_path);
    os << out.dump(2) << "\n";
  }
  return failures.empty() ? kExitOk : kExitFit;
}

int cmd_simulate(const SimulateArgs& args) {
  if (!(args.alpha > 0.0 && args.alpha < 1.0)) {
    throw UsageError("--alpha must lie in (0,1)");
  }
  const double projected =
      static_cast<double>(args.reps) * std::max(args.bootstrap_b, 1);
  if (projected > 1e7 && !args.force) {
    throw UsageError("projected " + std::to_string(projected) +
                     " refits exceeds 1e7; pass --force to proceed");
  }

  sim::McConfig cfg;
  cfg.sim_case = sim::SimCase::by_id(args.case_id);
  cfg.n1 = args.n1;
  cfg.n0 = args.n0;
  cfg.reps = args.reps;
  cfg.bootstrap_b = args.bootstrap_b;
  cfg.seed = args.seed;
  cfg.saturated = args.saturated;
  cfg.threads = args.threads;
  cfg.alpha = args.alpha;
  cfg.nuisance.mu_x_all_rct = !args.mu_x_arm_only;
  cfg.estimator.trim = args.trim;
  cfg.estimator.dr_weight_guard = args.dr_guard;
  if (!args.estimators.empty()) cfg.estimators = parse_estimators(args.estimators);

  const sim::McReport report = sim::run_monte_carlo(cfg);
  const std::vector<sim::McReport> reports = {report};
  const std::string text = sim::emit_table(reports, sim::TableFormat::text);
  std::fputs(text.c_str(), stdout);
  std::printf("true tau: %s\n", fmt(report.true_tau).c_str());

  if (!args.out_prefix.empty()) {
    std::map<std::string, std::string> flags = {
        {"case", std::to_string(args.case_id)},
        {"n1", std::to_string(args.n1)},
        {"n0", std::to_string(args.n0)},
        {"reps", std::to_string(args.reps)},
        {"bootstrap-b", std::to_string(args.bootstrap_b)},
        {"alpha", fmt(args.alpha)},
        {"saturated", args.saturated ? "true" : "false"},
        {"mu-x-arm-only", args.mu_x_arm_only ? "true" : "false"},
        {"trim", fmt(args.trim)},
        {"dr-guard", fmt(args.dr_guard)},
    };
    std::string estimators_flag;
    for (const auto& e : report.estimators) {
      if (!estimators_flag.empty()) estimators_flag += ",";
      estimators_flag += estimator_name(e.estimator);
    }
    flags["estimators"] = estimators_flag;
    const json manifest = make_manifest("simulate", flags, args.seed, {});
    const std::string comment = "# longfuse-manifest: " + manifest.dump() + "\n";

    std::ofstream csv(args.out_prefix + ".csv");
    if (!csv) throw DataError("cannot write " + args.out_prefix + ".csv");
    csv << comment << sim::emit_table(reports, sim::TableFormat::csv);

    std::ofstream txt(args.out_prefix + ".txt");
    if (!txt) throw DataError("cannot write " + args.out_prefix + ".txt");
    txt << comment << text;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longfuse: long-term treatment effects from a fused RCT and "
               "observational sample"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  EstimateArgs ea;
  auto* est = app.add_subcommand(
      "estimate", "Estimate the average treatment effect from CSV data");
  est->add_option("--data", ea.data_path,
                  "Fused CSV with a group column (g=1 RCT rows, empty y)");
  est->add_option("--rct", ea.rct_path, "RCT-only CSV (no group column needed)");
  est->add_option("--obs", ea.obs_path, "Observational-only CSV");
  est->add_option("--estimator", ea.estimator,
                  "ipw-true|ipw|dr|surrogate-index|all")
      ->default_val("all");
  est->add_option("--variance", ea.variance, "plugin|bootstrap|none")
      ->default_val("plugin");
  est->add_option("--bootstrap-b", ea.bootstrap_b, "Bootstrap replicates")
      ->default_val(200);
  est->add_option("--alpha", ea.alpha, "Two-sided level for CIs and tests")
      ->default_val(0.05);
  est->add_option("--seed", ea.seed, "Bootstrap seed")->default_val(1);
  est->add_option("--out", ea.out_path, "Write a JSON report here");
  est->add_option("--col-g", ea.col_g, "Group column name")->default_val("g");
  est->add_option("--col-t", ea.col_t, "Treatment column name")->default_val("t");
  est->add_option("--col-y", ea.col_y, "Outcome column name")->default_val("y");
  est->add_option("--cols-s", ea.cols_s, "Surrogate column names")->delimiter(',');
  est->add_option("--cols-x", ea.cols_x, "Covariate column names")->delimiter(',');
  est->add_option("--propensity-col", ea.propensity_col,
                  "Column with known treatment propensities");
  est->add_option("--propensity-const", ea.propensity_const,
                  "Constant known treatment propensity in (0,1)");
  est->add_option("--family", ea.family, "auto|continuous|binary")
      ->default_val("auto");
  est->add_option("--overlap-eps", ea.overlap_eps, "Overlap margin")
      ->default_val(0.05);
  est->add_option("--trim", ea.trim,
                  "Clip fitted propensities into [eps, 1-eps]")
      ->default_val(0.0);
  est->add_option("--dr-guard", ea.dr_guard,
                  "Clip the DR residual-line weights (selection propensities "
                  "and treatment propensities at observational units) into "
                  "[eps, 1-eps]; 0 disables")
      ->default_val(0.15);
  est->add_flag("--mu-x-arm-only", ea.mu_x_arm_only,
                "Restrict the mu_t(X) pseudo-outcome regression to arm t");
  est->add_option("--threads", ea.threads,
                  "Worker threads (default: LONGFUSE_THREADS or hardware)");

  SimulateArgs sa;
  auto* simc = app.add_subcommand(
      "simulate", "Run a Monte Carlo study on one of the 16 built-in cases");
  simc->add_option("--case", sa.case_id, "Case id 1..16")->required();
  simc->add_option("--n1", sa.n1, "RCT sample size")->default_val(200);
  simc->add_option("--n0", sa.n0, "Observational sample size")->default_val(500);
  simc->add_option("--reps", sa.reps, "Monte Carlo replicates")->default_val(1000);
  simc->add_option("--bootstrap-b", sa.bootstrap_b,
                   "Bootstrap replicates per Monte Carlo replicate (0 = off)")
      ->default_val(0);
  simc->add_option("--seed", sa.seed, "Master seed")->default_val(1);
  simc->add_option("--estimators", sa.estimators,
                   "Comma list of ipw-true,ipw,dr,surrogate-index")
      ->delimiter(',');
  simc->add_option("--out", sa.out_prefix, "Write <prefix>.csv and <prefix>.txt");
  simc->add_flag("--saturated", sa.saturated,
                 "Fully interacted encodings (discrete cases 5,6,11,12)");
  simc->add_option("--threads", sa.threads,
                   "Worker threads (default: LONGFUSE_THREADS or hardware)");
  simc->add_flag("--force", sa.force, "Allow more than 1e7 projected refits");
  simc->add_option("--alpha", sa.alpha, "Coverage level")->default_val(0.05);
  simc->add_flag("--mu-x-arm-only", sa.mu_x_arm_only,
                 "Restrict the mu_t(X) pseudo-outcome regression to arm t");
  simc->add_option("--trim", sa.trim, "Propensity trimming margin")
      ->default_val(0.0);
  simc->add_option("--dr-guard", sa.dr_guard,
                   "DR residual-line weight guard; 0 disables")
      ->default_val(0.15);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (est->parsed()) return cmd_estimate(ea);
    if (simc->parsed()) return cmd_simulate(sa);
  } catch (const FitError& e) {
    std::fprintf(stderr, "fit error: %s\n", e.what());
    return kExitFit;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFit;
  }
  return kExitUsage;
}
