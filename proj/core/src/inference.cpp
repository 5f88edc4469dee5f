#include "longfuse/inference.hpp"

#include <algorithm>
#include <cmath>

#include "longfuse/parallel.hpp"
#include "longfuse/stats.hpp"

namespace longfuse {

namespace {

constexpr std::uint64_t kBootstrapStream = 0xb005ull;

Eigen::VectorXd trimmed(Eigen::VectorXd p, double trim) {
  if (trim > 0.0) p = p.cwiseMax(trim).cwiseMin(1.0 - trim);
  return p;
}

}  // namespace

IpwVariance plugin_variance_ipw(const FusedDataset& data,
                                const FittedModel& h_model,
                                const PropensitySource& propensity,
                                const EstimatorOptions& opts) {
  if (h_model.prov.subset != FitSubset::obs) {
    throw FitError("ipw variance: h(X,S,T) must be fitted on observational data");
  }
  const auto& rows = data.rct_rows;
  const auto n1 = static_cast<double>(rows.size());

  const Eigen::VectorXd e = trimmed(propensity.at(data, rows), opts.trim);
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    if (!(e[i] > 0.0 && e[i] < 1.0)) {
      throw FitError("ipw variance: propensity at the boundary of (0,1)");
    }
  }
  const Eigen::VectorXd t = select_rows(data.t, rows);
  const Eigen::VectorXd h = h_model.predict(data, rows);
  const Eigen::ArrayXd w =
      (t.array() - e.array()) / (e.array() * (1.0 - e.array()));

  IpwVariance out;
  AsymptoticComponents& c = out.components;
  c.rho = data.rho_hat();
  c.V1 = sample_variance((w * h.array()).matrix());

  const Eigen::MatrixXd grad = h_model.gradient(data, rows);
  c.B1 = grad.transpose() * w.matrix() / n1;
  c.I_kappa = h_model.fit.fisher_information;
  const double kappa_term = c.rho * c.B1.dot(h_model.fit.information_solve(c.B1));
  c.var_ipw_true = c.V1 + kappa_term;

  if (propensity.mode == PropensityMode::estimated) {
    const Eigen::MatrixXd de = detail::augment(
        build_design(data, rows, propensity.model->design),
        propensity.model->fit.spec);
    const Eigen::ArrayXd cw = t.array() * h.array() * (1.0 - e.array()) / e.array() +
                              (1.0 - t.array()) * h.array() * e.array() /
                                  (1.0 - e.array());
    c.B2 = de.transpose() * cw.matrix() / n1;
    // Outer-product form of the information. With it, V1 - V2 equals the
    // sample variance of the score-residualized influence values, so the
    // estimated-propensity variance is nonnegative by construction; the
    // expected-information form leaves V1 - V2 as a difference of two large
    // near-equal numbers and is unusable in finite samples.
    const Eigen::ArrayXd opg = (t.array() - e.array()).square();
    c.I_gamma = de.transpose() * (de.array().colwise() * opg).matrix() / n1;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(c.I_gamma);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw FitError("ipw variance: singular I(gamma)");
    }
    c.V2 = c.B2.dot(ldlt.solve(c.B2));
    c.var_ipw_est = c.var_ipw_true - c.V2;
    if (c.var_ipw_est < 0.0) {
      throw FitError(
          "plug-in variance negative -- model misspecification suspected");
    }
    out.se = std::sqrt(c.var_ipw_est / n1);
  } else {
    c.V2 = 0.0;
    c.var_ipw_est = c.var_ipw_true;
    out.se = std::sqrt(c.var_ipw_true / n1);
  }
  return out;
}

double plugin_variance_dr(const FusedDataset& data, const EifContext& ctx,
                          const EstimatorOptions& opts) {
  const Eigen::VectorXd phi = eif_values(data, ctx, opts);
  const double mean_sq = phi.array().square().mean();
  return std::sqrt(mean_sq / static_cast<double>(data.n()));
}

WaldResult wald_inference(double tau_hat, double se, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw UsageError("wald_inference: alpha must lie in (0,1)");
  }
  if (se < 0.0) throw UsageError("wald_inference: negative standard error");
  WaldResult out;
  if (se == 0.0) {
    out.ci_low = out.ci_high = tau_hat;
    out.p_value = tau_hat == 0.0 ? 1.0 : 0.0;
    out.degenerate_se = true;
    return out;
  }
  const double z = normal_quantile(1.0 - alpha / 2.0);
  out.ci_low = tau_hat - z * se;
  out.ci_high = tau_hat + z * se;
  out.p_value = 2.0 * (1.0 - normal_cdf(std::abs(tau_hat) / se));
  return out;
}

void attach_wald(TauEstimate& estimate, double se, double alpha,
                 VarianceMethod method) {
  const WaldResult w = wald_inference(estimate.tau_hat, se, alpha);
  estimate.se = se;
  estimate.ci_low = w.ci_low;
  estimate.ci_high = w.ci_high;
  estimate.p_value = w.p_value;
  estimate.variance_method = method;
  if (w.degenerate_se) estimate.warnings.push_back("degenerate zero standard error");
}

FusedDataset resample_stratified(const FusedDataset& data, Rng& rng) {
  std::vector<Eigen::Index> picks;
  picks.reserve(static_cast<std::size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n1; ++i) {
    picks.push_back(data.rct_rows[rng.below(data.rct_rows.size())]);
  }
  for (Eigen::Index i = 0; i < data.n0; ++i) {
    picks.push_back(data.obs_rows[rng.below(data.obs_rows.size())]);
  }
  std::optional<Eigen::VectorXd> known;
  if (data.known_propensity) known = select_rows(*data.known_propensity, picks);
  return FusedDataset::make(select_rows(data.x, picks), select_rows(data.s, picks),
                            select_rows(data.t, picks), select_rows(data.g, picks),
                            select_rows(data.y, picks), data.outcome_family,
                            std::move(known));
}

MultiBootstrap bootstrap_replicates(const FusedDataset& data,
                                    const SuiteConfig& cfg,
                                    const BootstrapConfig& bcfg) {
  if (bcfg.b < 2) throw UsageError("bootstrap: need B >= 2 replicates");
  const auto m = static_cast<Eigen::Index>(cfg.estimators.size());
  MultiBootstrap out;
  out.replicates.setConstant(bcfg.b, m, std::numeric_limits<double>::quiet_NaN());
  out.failures.assign(static_cast<std::size_t>(m), 0);
  out.first_errors.assign(static_cast<std::size_t>(m), "");

  std::vector<std::vector<std::string>> errors(
      static_cast<std::size_t>(bcfg.b),
      std::vector<std::string>(static_cast<std::size_t>(m)));

  parallel_for(static_cast<std::size_t>(bcfg.b), bcfg.threads, [&](std::size_t b) {
    Rng rng(bcfg.seed, kBootstrapStream, static_cast<std::uint64_t>(b));
    try {
      const FusedDataset redraw = resample_stratified(data, rng);
      const auto points = estimate_points(redraw, cfg);
      for (std::size_t j = 0; j < points.size(); ++j) {
        if (points[j].tau) {
          out.replicates(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) =
              *points[j].tau;
        } else {
          errors[b][j] = points[j].error;
        }
      }
    } catch (const Error& e) {
      // Resample-level failure (e.g. an empty arm) fails every estimator.
      for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
        errors[b][j] = e.what();
      }
    }
  });

  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index b = 0; b < bcfg.b; ++b) {
      if (std::isnan(out.replicates(b, j))) {
        out.failures[static_cast<std::size_t>(j)]++;
        if (out.first_errors[static_cast<std::size_t>(j)].empty()) {
          out.first_errors[static_cast<std::size_t>(j)] =
              errors[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
        }
      }
    }
  }
  return out;
}

namespace {

BootstrapResult summarize_column(const Eigen::VectorXd& column, int failures,
                                 const std::string& first_error,
                                 const BootstrapConfig& bcfg) {
  BootstrapResult out;
  out.attempted = static_cast<int>(column.size());
  out.failures = failures;
  out.first_error = first_error;
  if (out.failures > bcfg.max_failure_rate * out.attempted) {
    throw FitError("bootstrap: " + std::to_string(out.failures) + " of " +
                   std::to_string(out.attempted) +
                   " replicates failed (first error: " + out.first_error + ")");
  }
  std::vector<double> ok;
  ok.reserve(static_cast<std::size_t>(column.size()));
  for (Eigen::Index b = 0; b < column.size(); ++b) {
    if (!std::isnan(column[b])) ok.push_back(column[b]);
  }
  if (ok.size() < 2) {
    throw FitError("bootstrap: fewer than two successful replicates");
  }
  out.replicates =
      Eigen::Map<Eigen::VectorXd>(ok.data(), static_cast<Eigen::Index>(ok.size()));
  out.se = sample_sd(out.replicates);
  return out;
}

}  // namespace

BootstrapResult bootstrap_se(const FusedDataset& data, EstimatorKind estimator,
                             const SuiteConfig& cfg, const BootstrapConfig& bcfg) {
  SuiteConfig single = cfg;
  single.estimators = {estimator};
  const MultiBootstrap multi = bootstrap_replicates(data, single, bcfg);
  return summarize_column(multi.replicates.col(0), multi.failures[0],
                          multi.first_errors[0], bcfg);
}

BootstrapResult bootstrap_se(
    const FusedDataset& data,
    const std::function<double(const FusedDataset&)>& estimator,
    const BootstrapConfig& bcfg) {
  if (bcfg.b < 2) throw UsageError("bootstrap: need B >= 2 replicates");
  Eigen::VectorXd values =
      Eigen::VectorXd::Constant(bcfg.b, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(static_cast<std::size_t>(bcfg.b));
  parallel_for(static_cast<std::size_t>(bcfg.b), bcfg.threads, [&](std::size_t b) {
    Rng rng(bcfg.seed, kBootstrapStream, static_cast<std::uint64_t>(b));
    try {
      values[static_cast<Eigen::Index>(b)] = estimator(resample_stratified(data, rng));
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });
  int failures = 0;
  std::string first_error;
  for (Eigen::Index b = 0; b < bcfg.b; ++b) {
    if (std::isnan(values[b])) {
      ++failures;
      if (first_error.empty()) first_error = errors[static_cast<std::size_t>(b)];
    }
  }
  return summarize_column(values, failures, first_error, bcfg);
}

}  // namespace longfuse
