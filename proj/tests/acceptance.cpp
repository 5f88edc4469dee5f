// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavier Monte Carlo settings mirror the benchmark tables
// this library reproduces.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "longfuse/dataset.hpp"
#include "longfuse/estimators.hpp"
#include "longfuse/inference.hpp"
#include "longfuse/simulation.hpp"
#include "longfuse/stats.hpp"

using namespace longfuse;
using json = nlohmann::json;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void report(int id, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", id,
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

bool within(double value, double lo, double hi) { return value >= lo && value <= hi; }

const sim::EstimatorSummary& summary_for(const sim::McReport& rep,
                                         EstimatorKind kind) {
  for (const auto& est : rep.estimators) {
    if (est.estimator == kind) return est;
  }
  throw std::runtime_error("estimator missing from report");
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;

  // ---- Criteria 1-3 share one case (1) study at n1 = 200. ----
  sim::McConfig c1;
  c1.sim_case = sim::SimCase::by_id(1);
  c1.n1 = 200;
  c1.n0 = 500;
  c1.reps = 1000;
  c1.seed = 42;
  const auto t0 = clock::now();
  const auto rep1 = sim::run_monte_carlo(c1);
  const double secs1 =
      std::chrono::duration<double>(clock::now() - t0).count();

  {
    const auto& ipw = summary_for(rep1, EstimatorKind::ipw_est);
    const auto& dr = summary_for(rep1, EstimatorKind::dr);
    const bool ipw_ok = std::abs(ipw.bias) <= 0.03 && within(*ipw.sd, 0.20, 0.28) &&
                        within(*ipw.ese / *ipw.sd, 0.85, 1.15) &&
                        within(*ipw.cp95, 0.93, 0.97);
    const bool dr_ok = std::abs(dr.bias) <= 0.03 && within(*dr.sd, 0.20, 0.28) &&
                       within(*dr.ese / *dr.sd, 0.85, 1.15) &&
                       within(*dr.cp95, 0.93, 0.99);
    const bool time_ok = secs1 < 180.0;
    report(1, "Table-1 reproduction, case (1), n1=200", ipw_ok && dr_ok && time_ok,
           "ipw_est bias=" + fmt2(ipw.bias) + " sd=" + fmt2(*ipw.sd) +
               " ese/sd=" + fmt2(*ipw.ese / *ipw.sd) + " cp95=" + fmt2(*ipw.cp95) +
               "; dr bias=" + fmt2(dr.bias) + " sd=" + fmt2(*dr.sd) +
               " ese/sd=" + fmt2(*dr.ese / *dr.sd) + " cp95=" + fmt2(*dr.cp95) +
               "; " + fmt2(secs1) + "s");
  }

  {
    const auto& ipw_true = summary_for(rep1, EstimatorKind::ipw_true);
    const auto& ipw_est = summary_for(rep1, EstimatorKind::ipw_est);
    const bool sd_ok = *ipw_est.sd < 0.5 * *ipw_true.sd;
    // Exact per-replicate inequality of the plug-in variances.
    int strict = 0;
    const int draws = 200;
    for (int r = 0; r < draws; ++r) {
      const auto data = sim::generate(sim::SimCase::by_id(1), 200, 500,
                                      40000 + static_cast<std::uint64_t>(r));
      const auto h = fit_h(data);
      const auto e_fit = fit_rct_propensity(data);
      const auto v = plugin_variance_ipw(data, h, PropensitySource::estimated(e_fit));
      if (v.components.var_ipw_est < v.components.var_ipw_true &&
          v.components.V2 >= 0.0) {
        ++strict;
      }
    }
    report(2, "known-vs-estimated propensity efficiency", sd_ok && strict == draws,
           "sd ratio=" + fmt2(*ipw_est.sd / *ipw_true.sd) + ", strict variance " +
               "inequality on " + std::to_string(strict) + "/" +
               std::to_string(draws) + " draws");
  }

  {
    const auto& si = summary_for(rep1, EstimatorKind::surrogate_index);
    const auto& dr = summary_for(rep1, EstimatorKind::dr);
    const bool ok = si.bias <= -0.5 && std::abs(dr.bias) <= 0.05;
    report(3, "surrogate-index baseline bias", ok,
           "surrogate bias=" + fmt2(si.bias) + ", dr bias=" + fmt2(dr.bias));
  }

  // ---- Criterion 4: Corollary-1 equivalence on saturated case (5). ----
  {
    sim::McConfig cfg;
    cfg.sim_case = sim::SimCase::by_id(5);
    cfg.n1 = 200;
    cfg.n0 = 500;
    cfg.reps = 1000;
    cfg.seed = 42;
    cfg.saturated = true;
    cfg.estimators = {EstimatorKind::ipw_est, EstimatorKind::dr};
    const auto rep = sim::run_monte_carlo(cfg);
    const auto& ipw = summary_for(rep, EstimatorKind::ipw_est);
    const auto& dr = summary_for(rep, EstimatorKind::dr);
    const double gap = std::abs(dr.bias - ipw.bias);  // shared true tau
    const double ratio = *dr.sd / *ipw.sd;
    const bool ok = gap <= 0.02 && within(ratio, 0.85, 1.15);
    report(4, "first-order equivalence, saturated case (5)", ok,
           "mean gap=" + fmt2(gap) + ", sd ratio=" + fmt2(ratio));
  }

  // ---- Criterion 5: binary outcome, case (7). ----
  {
    sim::McConfig cfg;
    cfg.sim_case = sim::SimCase::by_id(7);
    cfg.n1 = 200;
    cfg.n0 = 500;
    cfg.reps = 1000;
    cfg.seed = 42;
    cfg.estimators = {EstimatorKind::ipw_est};
    const auto rep = sim::run_monte_carlo(cfg);
    const auto& ipw = summary_for(rep, EstimatorKind::ipw_est);
    const bool ok = std::abs(ipw.bias) <= 0.01 && within(*ipw.cp95, 0.92, 0.97);
    report(5, "binary outcome, case (7)", ok,
           "bias=" + fmt2(ipw.bias) + " cp95=" + fmt2(*ipw.cp95));
  }

  // ---- Criterion 6: bootstrap inference for DR, case (1), n1=100. ----
  {
    const auto t6 = clock::now();
    sim::McConfig cfg;
    cfg.sim_case = sim::SimCase::by_id(1);
    cfg.n1 = 100;
    cfg.n0 = 500;
    cfg.reps = 300;
    cfg.bootstrap_b = 200;
    cfg.seed = 42;
    cfg.estimators = {EstimatorKind::dr};
    const auto rep = sim::run_monte_carlo(cfg);
    const double secs = std::chrono::duration<double>(clock::now() - t6).count();
    const auto& dr = summary_for(rep, EstimatorKind::dr);
    const bool ok = within(*dr.cp95_b, 0.91, 0.97) &&
                    std::abs(*dr.ese_b / *dr.sd - 1.0) <= 0.25 && secs < 1200.0;
    report(6, "bootstrap inference, case (1), n1=100", ok,
           "cp95.b=" + fmt2(*dr.cp95_b) + " ese.b/sd=" + fmt2(*dr.ese_b / *dr.sd) +
               " (" + fmt2(secs) + "s)");
  }

  // ---- Criterion 7: case (13) robustness replication. ----
  {
    sim::McConfig cfg;
    cfg.sim_case = sim::SimCase::by_id(13);
    cfg.n1 = 200;
    cfg.n0 = 500;
    cfg.reps = 1000;
    cfg.seed = 42;
    cfg.estimators = {EstimatorKind::ipw_est};
    const auto rep = sim::run_monte_carlo(cfg);
    const auto& ipw = summary_for(rep, EstimatorKind::ipw_est);
    const bool ok = std::abs(ipw.bias) <= 0.08 && within(*ipw.cp95, 0.92, 0.97);
    report(7, "assumption-violation case (13)", ok,
           "bias=" + fmt2(ipw.bias) + " cp95=" + fmt2(*ipw.cp95));
  }

  // ---- Criterion 8: property suites. ----
  {
    bool ok = true;
    std::string detail;

    // GLM gradient and Fisher finite-difference checks at 1e-4 relative.
    {
      const auto data = sim::generate(sim::SimCase::by_id(1), 150, 300, 81);
      const auto h = fit_h(data);
      const Eigen::MatrixXd design = build_design(data, data.obs_rows, h.design);
      const Eigen::VectorXd y = select_rows(data.y, data.obs_rows);
      const double eps = 1e-4;
      // Fisher vs numerical Hessian of the mean log-likelihood.
      const Eigen::Index d = h.fit.dim();
      Eigen::MatrixXd num(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          Eigen::VectorXd pp = h.fit.coefficients, pm = pp, mp = pp, mm = pp;
          pp[i] += eps; pp[j] += eps;
          pm[i] += eps; pm[j] -= eps;
          mp[i] -= eps; mp[j] += eps;
          mm[i] -= eps; mm[j] -= eps;
          num(i, j) = (mean_log_likelihood(h.fit, design, y, pp) -
                       mean_log_likelihood(h.fit, design, y, pm) -
                       mean_log_likelihood(h.fit, design, y, mp) +
                       mean_log_likelihood(h.fit, design, y, mm)) /
                      (4.0 * eps * eps);
        }
      }
      const double rel =
          (h.fit.fisher_information + num).cwiseAbs().maxCoeff() /
          h.fit.fisher_information.cwiseAbs().maxCoeff();
      if (rel > 1e-4) {
        ok = false;
        detail += "glm fisher FD rel=" + fmt2(rel) + "; ";
      }
    }

    // EIF empirical mean zero at tau_dr.
    {
      const auto data = sim::generate(sim::SimCase::by_id(1), 200, 500, 82);
      const auto nuis = assemble(data);
      const auto dr = estimate_dr(data, nuis);
      EifContext ctx{&nuis, dr.tau_hat, nuis.q_hat};
      const double mean_phi = eif_values(data, ctx).mean();
      if (std::abs(mean_phi) > 1e-10) {
        ok = false;
        detail += "eif mean=" + fmt2(mean_phi) + "; ";
      }
    }

    // Treatment-relabel antisymmetry to 1e-8.
    {
      const auto data = sim::generate(sim::SimCase::by_id(1), 150, 400, 83);
      const auto flipped = FusedDataset::make(
          data.x, data.s, (1.0 - data.t.array()).matrix(), data.g, data.y,
          data.outcome_family, data.known_propensity);
      SuiteConfig cfg;
      cfg.nuisance.tol = 1e-12;
      const auto a = estimate_points(data, cfg);
      const auto b = estimate_points(flipped, cfg);
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (!a[j].tau || !b[j].tau || std::abs(*a[j].tau + *b[j].tau) > 1e-8) {
          ok = false;
          detail += std::string("antisymmetry ") +
                    estimator_name(a[j].estimator) + "; ";
        }
      }
    }

    // Outcome-scale equivariance, exact for the continuous family.
    {
      const auto data = sim::generate(sim::SimCase::by_id(1), 120, 300, 84);
      Eigen::VectorXd y = data.y;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!std::isnan(y[i])) y[i] *= 2.0;
      }
      const auto doubled =
          FusedDataset::make(data.x, data.s, data.t, data.g, y,
                             data.outcome_family, data.known_propensity);
      SuiteConfig cfg;
      cfg.nuisance.tol = 1e-10;
      const auto a = estimate_points(data, cfg);
      const auto b = estimate_points(doubled, cfg);
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (!a[j].tau || !b[j].tau || *b[j].tau != 2.0 * *a[j].tau) {
          ok = false;
          detail += std::string("scale equivariance ") +
                    estimator_name(a[j].estimator) + "; ";
        }
      }
    }

    // Seed determinism, byte-exact through the table emitter.
    {
      sim::McConfig cfg;
      cfg.sim_case = sim::SimCase::by_id(1);
      cfg.n1 = 60;
      cfg.n0 = 150;
      cfg.reps = 10;
      cfg.seed = 85;
      cfg.threads = 2;
      const auto r1 = sim::run_monte_carlo(cfg);
      cfg.threads = 1;
      const auto r2 = sim::run_monte_carlo(cfg);
      if (sim::emit_table({r1}, sim::TableFormat::csv) !=
          sim::emit_table({r2}, sim::TableFormat::csv)) {
        ok = false;
        detail += "seed determinism; ";
      }
    }

    // Double robustness under deliberate misspecification.
    {
      for (int variant = 0; variant < 2; ++variant) {
        SuiteConfig cfg;
        cfg.estimators = {EstimatorKind::dr};
        DesignSpec intercept_only;
        if (variant == 0) {
          cfg.nuisance.mu_x_design = intercept_only;
        } else {
          cfg.nuisance.g_design = intercept_only;
        }
        std::vector<double> taus;
        for (int r = 0; r < 30; ++r) {
          const auto data =
              sim::generate(sim::SimCase::by_id(1), 2000, 5000,
                            86000 + static_cast<std::uint64_t>(1000 * variant + r));
          const auto pts = estimate_points(data, cfg);
          if (pts[0].tau) taus.push_back(*pts[0].tau);
        }
        Eigen::Map<Eigen::VectorXd> tv(taus.data(),
                                       static_cast<Eigen::Index>(taus.size()));
        const double se = sample_sd(tv) / std::sqrt(static_cast<double>(taus.size()));
        if (taus.size() < 28 || std::abs(tv.mean() - 2.0) > 3.0 * se + 0.01) {
          ok = false;
          detail += std::string("double robustness variant ") +
                    (variant == 0 ? "mu_x" : "g") + " bias=" +
                    fmt2(tv.mean() - 2.0) + "; ";
        }
      }
    }

    report(8, "property suites", ok, ok ? "all properties hold" : detail);
  }

  // ---- Criterion 9: applied-analysis-shaped workflow through the CLI. ----
  {
    const auto data = sim::generate(sim::SimCase::by_id(7), 60, 600, 2024);
    write_csv(data, "acceptance_fixture.csv");
    const std::string cmd =
        std::string(LONGFUSE_CLI_PATH) +
        " estimate --data acceptance_fixture.csv --propensity-col e_true"
        " --estimator all --variance bootstrap --bootstrap-b 200 --seed 7"
        " --out acceptance_out.json > acceptance_stdout.txt 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WEXITSTATUS(status);
    bool ok = code == 0;
    std::string detail = "exit=" + std::to_string(code);
    if (ok) {
      std::ifstream in("acceptance_out.json");
      std::stringstream ss;
      ss << in.rdbuf();
      const auto j = json::parse(ss.str());
      ok = j["estimates"].size() == 4;
      int checked = 0;
      for (const auto& est : j["estimates"]) {
        if (!est.contains("p_value")) { ok = false; continue; }
        const double tau = est["tau_hat"];
        const double p = est["p_value"];
        if (!(p >= 0.0 && p <= 1.0)) ok = false;
        if (!(double(est["ci"][0]) <= tau && tau <= double(est["ci"][1]))) ok = false;
        ++checked;
      }
      detail += ", estimates=" + std::to_string(checked) + "/4 with valid p and CI";
    }
    report(9, "applied workflow on a 60/600 binary fixture", ok, detail);
    std::remove("acceptance_fixture.csv");
    std::remove("acceptance_out.json");
    std::remove("acceptance_stdout.txt");
  }

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures;
}
