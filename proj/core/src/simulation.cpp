#include "longfuse/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "longfuse/inference.hpp"
#include "longfuse/parallel.hpp"
#include "longfuse/rng.hpp"
#include "longfuse/stats.hpp"

namespace longfuse::sim {

namespace {

constexpr std::uint64_t kGenerateStream = 0x6e71ull;
constexpr std::uint64_t kOracleStream = 0x07acull;
constexpr std::uint64_t kReplicateStream = 0x5e7ull;
constexpr std::uint64_t kBootStream = 0xb001ull;

double u_term(const SimCase& sc, double u) {
  return sc.nonlinear_surrogate ? u * u : u;
}

double x_term(const SimCase& sc, double x1, double x2) {
  return sc.nonlinear_surrogate ? x1 * x1 + x2 * x2 : x1 + x2;
}

// Potential surrogate S(t) given unit-level draws; eps carries the shared
// noise (normal for continuous S, uniform for the Bernoulli draw).
double surrogate(const SimCase& sc, double u, double x1, double x2, double t,
                 double eps) {
  const double arg = u_term(sc, u) + sc.s_x_coef * x_term(sc, x1, x2) + t;
  if (sc.discrete_xs) return eps < expit(arg) ? 1.0 : 0.0;
  return arg + eps;
}

double outcome_mean(const SimCase& sc, double u, double x1, double x2, double t,
                    double s) {
  const double arg = (sc.y_has_u ? u : 0.0) + t + 3.0 * (x1 + x2) + s;
  return sc.outcome_family == Family::logistic ? expit(arg) : arg;
}

double obs_assign_logit(const SimCase& sc, double u, double x1, double x2) {
  switch (sc.obs_assign) {
    case ObsAssign::u_plus_x: return u + x1 + x2;
    case ObsAssign::u_plus_xu: return u + x1 + x2 * u;
    case ObsAssign::x_only: return x1 + x2;
  }
  return 0.0;
}

// E over U ~ N(0,1) of f(U) by composite Simpson on [-12, 12].
double gauss_expectation(const std::function<double(double)>& f) {
  constexpr int kIntervals = 4800;  // even
  constexpr double lo = -12.0, hi = 12.0;
  const double step = (hi - lo) / kIntervals;
  auto weighted = [&](double u) {
    return f(u) * std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
  };
  double sum = weighted(lo) + weighted(hi);
  for (int i = 1; i < kIntervals; ++i) {
    sum += weighted(lo + i * step) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * step / 3.0;
}

}  // namespace

SimCase SimCase::by_id(int id) {
  if (id < 1 || id > 16) {
    throw UsageError("simulation: case id must lie in 1..16, got " +
                     std::to_string(id));
  }
  SimCase sc;
  sc.id = id;
  sc.outcome_family =
      ((id >= 7 && id <= 12) || id == 15 || id == 16) ? Family::logistic
                                                      : Family::linear;
  sc.discrete_xs = id == 5 || id == 6 || id == 11 || id == 12;
  sc.u_shift_obs = id == 3 || id == 4 || id == 9 || id == 10;
  sc.nonlinear_surrogate = id % 2 == 0;  // even cases use the squared forms
  sc.s_x_coef = (id == 5 || id == 6) ? -2.0 : 2.0;
  if (id >= 13) {
    sc.obs_assign = ObsAssign::x_only;
  } else if (id == 2 || id == 4 || id == 6) {
    sc.obs_assign = ObsAssign::u_plus_xu;
  } else {
    sc.obs_assign = ObsAssign::u_plus_x;
  }
  sc.y_has_u = id == 13 || id == 15 || id == 16;
  sc.obs_x_mean = id == 8 ? 0.0 : 1.0;
  return sc;
}

SimDraw generate_draw(const SimCase& sc, Eigen::Index n1, Eigen::Index n0,
                      std::uint64_t seed) {
  if (n1 < 1 || n0 < 1) throw UsageError("generate: need n1 >= 1 and n0 >= 1");
  const Eigen::Index n = n1 + n0;
  Eigen::MatrixXd x(n, 2);
  Eigen::MatrixXd s(n, 1);
  Eigen::VectorXd t(n), g(n), y(n);
  Eigen::VectorXd rct_y(n1);

  Rng rng(seed, kGenerateStream, static_cast<std::uint64_t>(sc.id));

  auto draw_outcome = [&](double u, double x1, double x2, double tt, double ss) {
    const double m = outcome_mean(sc, u, x1, x2, tt, ss);
    if (sc.outcome_family == Family::logistic) {
      return rng.uniform() < m ? 1.0 : 0.0;
    }
    return m + rng.normal();
  };

  for (Eigen::Index i = 0; i < n1; ++i) {
    const double x1 = sc.discrete_xs ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
    const double x2 = sc.discrete_xs ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
    const double u = rng.normal();
    const double tt = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double eps = sc.discrete_xs ? rng.uniform() : rng.normal();
    const double ss = surrogate(sc, u, x1, x2, tt, eps);
    x(i, 0) = x1;
    x(i, 1) = x2;
    s(i, 0) = ss;
    t[i] = tt;
    g[i] = 1.0;
    y[i] = FusedDataset::missing;
    rct_y[i] = draw_outcome(u, x1, x2, tt, ss);
  }
  for (Eigen::Index i = n1; i < n; ++i) {
    double x1, x2;
    if (sc.discrete_xs) {
      x1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
      x2 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    } else {
      x1 = rng.normal(sc.obs_x_mean, 2.0);
      x2 = rng.normal(sc.obs_x_mean, 2.0);
    }
    const double u = sc.u_shift_obs ? rng.normal(1.0, 2.0) : rng.normal();
    const double tt =
        rng.bernoulli(expit(obs_assign_logit(sc, u, x1, x2))) ? 1.0 : 0.0;
    const double eps = sc.discrete_xs ? rng.uniform() : rng.normal();
    const double ss = surrogate(sc, u, x1, x2, tt, eps);
    x(i, 0) = x1;
    x(i, 1) = x2;
    s(i, 0) = ss;
    t[i] = tt;
    g[i] = 0.0;
    y[i] = draw_outcome(u, x1, x2, tt, ss);
  }

  SimDraw draw{FusedDataset::make(std::move(x), std::move(s), std::move(t),
                                  std::move(g), std::move(y), sc.outcome_family,
                                  Eigen::VectorXd::Constant(n, 0.5)),
               std::move(rct_y)};
  return draw;
}

FusedDataset generate(const SimCase& sc, Eigen::Index n1, Eigen::Index n0,
                      std::uint64_t seed) {
  return generate_draw(sc, n1, n0, seed).data;
}

OracleTau mc_true_tau(const SimCase& sc, Eigen::Index oracle_n, std::uint64_t seed) {
  if (oracle_n < 1000) throw UsageError("true_tau: oracle_n must be >= 1000");
  Rng rng(seed, kOracleStream, static_cast<std::uint64_t>(sc.id));
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index i = 0; i < oracle_n; ++i) {
    const double x1 = sc.discrete_xs ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
    const double x2 = sc.discrete_xs ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.normal();
    const double u = rng.normal();
    const double eps = sc.discrete_xs ? rng.uniform() : rng.normal();
    const double s1 = surrogate(sc, u, x1, x2, 1.0, eps);
    const double s0 = surrogate(sc, u, x1, x2, 0.0, eps);
    // Shared outcome noise cancels in the difference of potential outcomes,
    // so the conditional means are averaged directly.
    const double diff = outcome_mean(sc, u, x1, x2, 1.0, s1) -
                        outcome_mean(sc, u, x1, x2, 0.0, s0);
    sum += diff;
    sum_sq += diff * diff;
  }
  const double nn = static_cast<double>(oracle_n);
  OracleTau out;
  out.tau = sum / nn;
  const double var = (sum_sq - nn * out.tau * out.tau) / (nn - 1.0);
  out.se = std::sqrt(std::max(var, 0.0) / nn);
  return out;
}

double true_tau(const SimCase& sc, Eigen::Index oracle_n, std::uint64_t seed) {
  if (sc.outcome_family == Family::logistic) {
    return mc_true_tau(sc, oracle_n, seed).tau;
  }
  // Outcome linear in S: tau = 1 + E[S(1) - S(0)].
  if (!sc.discrete_xs) return 2.0;
  // Discrete surrogate: integrate the expit difference over U and enumerate X.
  double delta = 0.0;
  for (int x1 : {0, 1}) {
    for (int x2 : {0, 1}) {
      const double xt = sc.s_x_coef * x_term(sc, x1, x2);
      delta += 0.25 * gauss_expectation([&](double u) {
        const double base = u_term(sc, u) + xt;
        return expit(base + 1.0) - expit(base);
      });
    }
  }
  return 1.0 + delta;
}

FusedDataset saturate(const FusedDataset& data) {
  if (data.x.cols() != 2 || data.s.cols() != 1) {
    throw UsageError("saturate: expects two covariates and a scalar surrogate");
  }
  auto check01 = [](double v) { return v == 0.0 || v == 1.0; };
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!check01(data.x(i, 0)) || !check01(data.x(i, 1)) || !check01(data.s(i, 0))) {
      throw UsageError("saturate: covariates and surrogate must be binary");
    }
  }
  Eigen::MatrixXd x(data.n(), 3);
  Eigen::MatrixXd s(data.n(), 4);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double x1 = data.x(i, 0), x2 = data.x(i, 1), ss = data.s(i, 0);
    x(i, 0) = x1;
    x(i, 1) = x2;
    x(i, 2) = x1 * x2;
    s(i, 0) = ss;
    s(i, 1) = ss * x1;
    s(i, 2) = ss * x2;
    s(i, 3) = ss * x1 * x2;
  }
  return FusedDataset::make(std::move(x), std::move(s), data.t, data.g, data.y,
                            data.outcome_family, data.known_propensity);
}

namespace {

struct RepRecord {
  std::optional<double> tau;
  std::optional<double> se;
  std::optional<double> se_b;
};

}  // namespace

McReport run_monte_carlo(const McConfig& cfg) {
  if (cfg.reps < 1) throw UsageError("run_monte_carlo: reps must be >= 1");
  if (cfg.saturated && !cfg.sim_case.discrete_xs) {
    throw UsageError("run_monte_carlo: saturated encoding needs a discrete case");
  }
  const auto m = cfg.estimators.size();
  if (m == 0) throw UsageError("run_monte_carlo: no estimators enabled");

  McReport report;
  report.case_id = cfg.sim_case.id;
  report.n1 = cfg.n1;
  report.n0 = cfg.n0;
  report.reps = cfg.reps;
  report.bootstrap_b = cfg.bootstrap_b;
  report.seed = cfg.seed;
  report.true_tau =
      true_tau(cfg.sim_case, cfg.oracle_n, Rng::splitmix64(cfg.seed ^ kOracleStream));

  SuiteConfig suite;
  suite.estimators = cfg.estimators;
  suite.nuisance = cfg.nuisance;
  suite.estimator = cfg.estimator;
  suite.with_plugin_se = true;
  if (cfg.saturated) {
    suite.nuisance.h_interact_t = true;
    suite.nuisance.drop_aliased = true;
    suite.nuisance.allow_boundary_fits = true;
  }

  std::vector<std::vector<RepRecord>> records(
      static_cast<std::size_t>(cfg.reps), std::vector<RepRecord>(m));

  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed =
        Rng::splitmix64(cfg.seed ^ Rng::splitmix64(kReplicateStream ^ r));
    FusedDataset data =
        generate(cfg.sim_case, cfg.n1, cfg.n0, rep_seed);
    if (cfg.saturated) data = saturate(data);

    const auto points = estimate_points(data, suite);
    for (std::size_t j = 0; j < m; ++j) {
      records[r][j].tau = points[j].tau;
      records[r][j].se = points[j].se;
    }
    if (cfg.bootstrap_b > 0) {
      SuiteConfig boot_suite = suite;
      boot_suite.with_plugin_se = false;
      BootstrapConfig bcfg;
      bcfg.b = cfg.bootstrap_b;
      bcfg.seed = Rng::splitmix64(rep_seed ^ kBootStream);
      bcfg.threads = 1;  // replicates already run in parallel
      const MultiBootstrap boot = bootstrap_replicates(data, boot_suite, bcfg);
      for (std::size_t j = 0; j < m; ++j) {
        const int ok = cfg.bootstrap_b - boot.failures[j];
        if (ok < 2 || boot.failures[j] > bcfg.max_failure_rate * cfg.bootstrap_b) {
          continue;  // bootstrap failed for this estimator in this replicate
        }
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(ok));
        for (Eigen::Index b = 0; b < cfg.bootstrap_b; ++b) {
          const double v = boot.replicates(b, static_cast<Eigen::Index>(j));
          if (!std::isnan(v)) vals.push_back(v);
        }
        records[r][j].se_b = sample_sd(Eigen::Map<Eigen::VectorXd>(
            vals.data(), static_cast<Eigen::Index>(vals.size())));
      }
    }
  });

  const double z95 = normal_quantile(1.0 - cfg.alpha / 2.0);
  for (std::size_t j = 0; j < m; ++j) {
    EstimatorSummary sum;
    sum.estimator = cfg.estimators[j];
    std::vector<double> taus, ses, ses_b;
    int covered = 0, covered_b = 0, with_se = 0, with_se_b = 0;
    for (int r = 0; r < cfg.reps; ++r) {
      const RepRecord& rec = records[static_cast<std::size_t>(r)][j];
      if (!rec.tau) {
        sum.fail_count++;
        continue;
      }
      taus.push_back(*rec.tau);
      if (rec.se) {
        ses.push_back(*rec.se);
        with_se++;
        if (std::abs(*rec.tau - report.true_tau) <= z95 * *rec.se) covered++;
      } else {
        sum.se_fail_count++;
      }
      if (cfg.bootstrap_b > 0) {
        if (rec.se_b) {
          ses_b.push_back(*rec.se_b);
          with_se_b++;
          if (std::abs(*rec.tau - report.true_tau) <= z95 * *rec.se_b) covered_b++;
        } else {
          sum.boot_fail_count++;
        }
      }
    }
    sum.reps_used = static_cast<int>(taus.size());
    if (sum.fail_count > 0.1 * cfg.reps) {
      throw FitError(std::string("run_monte_carlo: estimator ") +
                     estimator_name(sum.estimator) + " failed in " +
                     std::to_string(sum.fail_count) + " of " +
                     std::to_string(cfg.reps) + " replicates");
    }
    if (sum.reps_used > 0) {
      Eigen::Map<Eigen::VectorXd> tv(taus.data(),
                                     static_cast<Eigen::Index>(taus.size()));
      sum.bias = tv.mean() - report.true_tau;
      if (taus.size() >= 2) sum.sd = sample_sd(tv);
    }
    if (with_se > 0) {
      Eigen::Map<Eigen::VectorXd> sv(ses.data(),
                                     static_cast<Eigen::Index>(ses.size()));
      sum.ese = sv.mean();
      sum.cp95 = static_cast<double>(covered) / with_se;
    }
    if (with_se_b > 0) {
      Eigen::Map<Eigen::VectorXd> sv(ses_b.data(),
                                     static_cast<Eigen::Index>(ses_b.size()));
      sum.ese_b = sv.mean();
      sum.cp95_b = static_cast<double>(covered_b) / with_se_b;
    }
    report.estimators.push_back(std::move(sum));
  }
  return report;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_opt(std::string& out, const std::optional<double>& v) {
  if (v) append_number(out, *v);
}

std::string scaled(const std::optional<double>& v) {
  if (!v) return "--";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
  return buf;
}

std::string scaled(double v) { return scaled(std::optional<double>(v)); }

const char* estimator_heading(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ipw_true: return "IPW estimator, true propensity score";
    case EstimatorKind::ipw_est: return "IPW estimator, estimated propensity score";
    case EstimatorKind::dr: return "Doubly robust estimator";
    case EstimatorKind::surrogate_index: return "Surrogate index baseline";
  }
  return "?";
}

}  // namespace

std::string emit_table(const std::vector<McReport>& reports, TableFormat format) {
  if (reports.empty()) throw UsageError("emit_table: no reports");
  if (format == TableFormat::csv) {
    std::string out =
        "case,estimator,n1,n0,reps,bias,sd,ese,cp95,ese_b,cp95_b,fail_count,"
        "true_tau\n";
    for (const auto& rep : reports) {
      for (const auto& est : rep.estimators) {
        out += std::to_string(rep.case_id);
        out += ',';
        out += estimator_name(est.estimator);
        out += ',' + std::to_string(rep.n1) + ',' + std::to_string(rep.n0) + ',' +
               std::to_string(rep.reps) + ',';
        append_number(out, est.bias);
        out += ',';
        append_opt(out, est.sd);
        out += ',';
        append_opt(out, est.ese);
        out += ',';
        append_opt(out, est.cp95);
        out += ',';
        append_opt(out, est.ese_b);
        out += ',';
        append_opt(out, est.cp95_b);
        out += ',' + std::to_string(est.fail_count) + ',';
        append_number(out, rep.true_tau);
        out += '\n';
      }
    }
    return out;
  }

  // Text render in the usual table style, every value magnified 100 times.
  std::string out;
  out += "All values x100. Bias (SD) over replicates; ESE/CP95 from the plug-in\n";
  out += "variance; ESE.b/CP95.b from the stratified bootstrap.\n\n";
  std::vector<EstimatorKind> kinds;
  for (const auto& rep : reports) {
    for (const auto& est : rep.estimators) {
      if (std::find(kinds.begin(), kinds.end(), est.estimator) == kinds.end()) {
        kinds.push_back(est.estimator);
      }
    }
  }
  char line[192];
  for (EstimatorKind kind : kinds) {
    out += estimator_heading(kind);
    out += '\n';
    std::snprintf(line, sizeof(line), "  %-5s %6s %6s %6s %14s %8s %7s %8s %7s %5s\n",
                  "case", "n1", "n0", "reps", "Bias (SD)", "ESE", "CP95", "ESE.b",
                  "CP95.b", "fail");
    out += line;
    for (const auto& rep : reports) {
      for (const auto& est : rep.estimators) {
        if (est.estimator != kind) continue;
        const std::string bias_sd =
            scaled(est.bias) + " (" + scaled(est.sd) + ")";
        std::snprintf(line, sizeof(line),
                      "  (%d)%*s %6lld %6lld %6d %14s %8s %7s %8s %7s %5d\n",
                      rep.case_id, rep.case_id < 10 ? 2 : 1, "",
                      static_cast<long long>(rep.n1), static_cast<long long>(rep.n0),
                      rep.reps, bias_sd.c_str(), scaled(est.ese).c_str(),
                      scaled(est.cp95).c_str(), scaled(est.ese_b).c_str(),
                      scaled(est.cp95_b).c_str(), est.fail_count);
        out += line;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace longfuse::sim
