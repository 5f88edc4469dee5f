#include "longfuse/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "longfuse/inference.hpp"

namespace longfuse {

namespace {

using json = nlohmann::ordered_json;

void apply_trim(Eigen::VectorXd& p, double trim) {
  if (trim <= 0.0) return;
  p = p.cwiseMax(trim).cwiseMin(1.0 - trim);
}

void check_propensity_open(const Eigen::VectorXd& e, const char* what) {
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    if (!(e[i] > 0.0 && e[i] < 1.0)) {
      throw FitError(std::string(what) + " propensity at the boundary of (0,1) " +
                     "(value " + std::to_string(e[i]) + ")");
    }
  }
}

double ipw_mean(const FusedDataset& data, const Eigen::VectorXd& h,
                const Eigen::VectorXd& e) {
  const Eigen::VectorXd t = select_rows(data.t, data.rct_rows);
  const Eigen::ArrayXd terms = t.array() * h.array() / e.array() -
                               (1.0 - t.array()) * h.array() / (1.0 - e.array());
  return terms.mean();
}

// Per-unit summand of the doubly robust estimator; subtracting (G/q)*tau
// turns it into the efficient influence function.
Eigen::VectorXd dr_summands(const FusedDataset& data, const NuisanceSet& nuis,
                            const EstimatorOptions& opts,
                            std::vector<std::string>* warnings) {
  const double q = nuis.q_hat;
  if (!(q > 0.0 && q < 1.0)) throw UsageError("dr: q_hat must lie in (0,1)");

  Eigen::VectorXd e_rct = nuis.propensity(data, data.rct_rows);
  Eigen::VectorXd e_obs = nuis.propensity(data, data.obs_rows);
  if (opts.trim > 0.0) {
    const double lo = std::min(e_rct.minCoeff(), e_obs.minCoeff());
    const double hi = std::max(e_rct.maxCoeff(), e_obs.maxCoeff());
    if ((lo < opts.trim || hi > 1.0 - opts.trim) && warnings) {
      warnings->push_back("propensities trimmed into [" + std::to_string(opts.trim) +
                          ", " + std::to_string(1.0 - opts.trim) + "]");
    }
    apply_trim(e_rct, opts.trim);
    apply_trim(e_obs, opts.trim);
  }
  check_propensity_open(e_rct, "dr: treatment");

  const Eigen::VectorXd a1_rct = nuis.mu_sx[1].predict(data, data.rct_rows);
  const Eigen::VectorXd a0_rct = nuis.mu_sx[0].predict(data, data.rct_rows);
  const Eigen::VectorXd b1_rct = nuis.mu_x[1].predict(data, data.rct_rows);
  const Eigen::VectorXd b0_rct = nuis.mu_x[0].predict(data, data.rct_rows);

  const Eigen::VectorXd a1_obs = nuis.mu_sx[1].predict(data, data.obs_rows);
  const Eigen::VectorXd a0_obs = nuis.mu_sx[0].predict(data, data.obs_rows);
  Eigen::VectorXd g1_obs = nuis.g_sx[1].predict(data, data.obs_rows);
  Eigen::VectorXd g0_obs = nuis.g_sx[0].predict(data, data.obs_rows);
  if (opts.trim > 0.0) {
    apply_trim(g1_obs, opts.trim);
    apply_trim(g0_obs, opts.trim);
  }
  if (opts.dr_weight_guard > 0.0) {
    apply_trim(e_obs, opts.dr_weight_guard);
    apply_trim(g1_obs, opts.dr_weight_guard);
    apply_trim(g0_obs, opts.dr_weight_guard);
  }
  check_propensity_open(e_obs, "dr: treatment");

  Eigen::VectorXd out = Eigen::VectorXd::Zero(data.n());
  for (std::size_t i = 0; i < data.rct_rows.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double t = data.t[data.rct_rows[i]];
    const double e = e_rct[idx];
    const double term = t * (a1_rct[idx] - b1_rct[idx]) / e -
                        (1.0 - t) * (a0_rct[idx] - b0_rct[idx]) / (1.0 - e) +
                        b1_rct[idx] - b0_rct[idx];
    out[data.rct_rows[i]] = term / q;
  }
  for (std::size_t i = 0; i < data.obs_rows.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const Eigen::Index row = data.obs_rows[i];
    const double t = data.t[row];
    const double y = data.y[row];
    const double e = e_obs[idx];
    double term = 0.0;
    if (t == 1.0) {
      const double g1 = g1_obs[idx];
      if (g1 >= 1.0) {
        throw FitError("dr: fitted selection propensity g_1 = 1 at observational "
                       "row " + std::to_string(row));
      }
      term = g1 * (y - a1_obs[idx]) / (e * (1.0 - g1));
    } else {
      const double g0 = g0_obs[idx];
      if (g0 >= 1.0) {
        throw FitError("dr: fitted selection propensity g_0 = 1 at observational "
                       "row " + std::to_string(row));
      }
      term = -g0 * (y - a0_obs[idx]) / ((1.0 - e) * (1.0 - g0));
    }
    out[row] = term / q;
  }
  return out;
}

}  // namespace

const char* estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ipw_true: return "ipw_true";
    case EstimatorKind::ipw_est: return "ipw_est";
    case EstimatorKind::dr: return "dr";
    case EstimatorKind::surrogate_index: return "surrogate_index";
  }
  return "?";
}

std::optional<EstimatorKind> estimator_from_name(const std::string& name) {
  if (name == "ipw_true" || name == "ipw-true") return EstimatorKind::ipw_true;
  if (name == "ipw_est" || name == "ipw") return EstimatorKind::ipw_est;
  if (name == "dr") return EstimatorKind::dr;
  if (name == "surrogate_index" || name == "surrogate-index") {
    return EstimatorKind::surrogate_index;
  }
  return std::nullopt;
}

const char* variance_method_name(VarianceMethod method) {
  switch (method) {
    case VarianceMethod::plugin: return "plugin";
    case VarianceMethod::bootstrap: return "bootstrap";
    case VarianceMethod::none: return "none";
  }
  return "?";
}

Eigen::VectorXd PropensitySource::at(const FusedDataset& data,
                                     const std::vector<Eigen::Index>& rows) const {
  if (mode == PropensityMode::known) {
    if (!data.known_propensity) {
      throw UsageError("known propensities requested but the dataset carries none");
    }
    return select_rows(*data.known_propensity, rows);
  }
  if (!model) throw UsageError("estimated propensity source without a fitted model");
  return model->predict(data, rows);
}

TauEstimate estimate_ipw(const FusedDataset& data, const FittedModel& h_model,
                         const PropensitySource& propensity,
                         const EstimatorOptions& opts) {
  if (h_model.prov.subset != FitSubset::obs) {
    throw FitError("ipw: h(X,S,T) must be fitted on observational data");
  }
  TauEstimate est;
  est.estimator = propensity.mode == PropensityMode::known ? EstimatorKind::ipw_true
                                                           : EstimatorKind::ipw_est;
  Eigen::VectorXd e = propensity.at(data, data.rct_rows);
  if (opts.trim > 0.0) {
    if (e.minCoeff() < opts.trim || e.maxCoeff() > 1.0 - opts.trim) {
      est.warnings.push_back("propensities trimmed");
    }
    apply_trim(e, opts.trim);
  }
  check_propensity_open(e, "ipw: treatment");
  const Eigen::VectorXd h = h_model.predict(data, data.rct_rows);
  est.tau_hat = ipw_mean(data, h, e);
  return est;
}

TauEstimate estimate_dr(const FusedDataset& data, const NuisanceSet& nuisances,
                        const EstimatorOptions& opts) {
  TauEstimate est;
  est.estimator = EstimatorKind::dr;
  est.tau_hat = dr_summands(data, nuisances, opts, &est.warnings).mean();
  return est;
}

FittedModel fit_surrogate_index(const FusedDataset& data,
                                const NuisanceOptions& opts) {
  FittedModel m;
  m.design = DesignSpec::xs(data);
  m.prov = {FitSubset::obs, -1, static_cast<Eigen::Index>(data.obs_rows.size())};
  GlmSpec spec;
  spec.family = data.outcome_family;
  spec.max_iter = opts.max_iter;
  spec.tol = opts.tol;
  try {
    m.fit = fit_glm(spec, build_design(data, data.obs_rows, m.design),
                    select_rows(data.y, data.obs_rows));
    if (!m.fit.converged) throw FitError("IRLS did not converge");
  } catch (const Error& e) {
    throw FitError(std::string("surrogate index y(S,X) on observational data: ") +
                   e.what());
  }
  return m;
}

TauEstimate estimate_surrogate_index(const FusedDataset& data,
                                     const PropensitySource& propensity,
                                     const EstimatorOptions& opts) {
  const FittedModel y_model = fit_surrogate_index(data);
  TauEstimate est;
  est.estimator = EstimatorKind::surrogate_index;
  Eigen::VectorXd e = propensity.at(data, data.rct_rows);
  if (opts.trim > 0.0) apply_trim(e, opts.trim);
  check_propensity_open(e, "surrogate index: treatment");
  const Eigen::VectorXd yhat = y_model.predict(data, data.rct_rows);
  est.tau_hat = ipw_mean(data, yhat, e);
  return est;
}

Eigen::VectorXd eif_values(const FusedDataset& data, const EifContext& ctx,
                           const EstimatorOptions& opts) {
  if (!ctx.nuisances) throw UsageError("eif: missing nuisances");
  if (!(ctx.q > 0.0 && ctx.q < 1.0)) throw UsageError("eif: q must lie in (0,1)");
  Eigen::VectorXd values = dr_summands(data, *ctx.nuisances, opts, nullptr);
  const double shift = ctx.tau / ctx.q;
  for (Eigen::Index row : data.rct_rows) values[row] -= shift;
  return values;
}

double eif_value(const Unit& unit, const EifContext& ctx,
                 const EstimatorOptions& opts) {
  if (!ctx.nuisances) throw UsageError("eif: missing nuisances");
  if (!(ctx.q > 0.0 && ctx.q < 1.0)) throw UsageError("eif: q must lie in (0,1)");
  const NuisanceSet& nu = *ctx.nuisances;
  const double q = ctx.q;
  const double t = unit.t;

  auto propensity_at = [&](const Unit& u) {
    if (nu.propensity_mode == PropensityMode::estimated) {
      return nu.e_fit->predict_unit(u.x, u.s, u.t);
    }
    throw UsageError("eif: unit-level evaluation needs an estimated propensity model");
  };
  double e = propensity_at(unit);
  if (opts.trim > 0.0) e = std::clamp(e, opts.trim, 1.0 - opts.trim);

  if (unit.g == 1) {
    if (!(e > 0.0 && e < 1.0)) throw FitError("eif: propensity at the boundary");
    const double a1 = nu.mu_sx[1].predict_unit(unit.x, unit.s, t);
    const double a0 = nu.mu_sx[0].predict_unit(unit.x, unit.s, t);
    const double b1 = nu.mu_x[1].predict_unit(unit.x, unit.s, t);
    const double b0 = nu.mu_x[0].predict_unit(unit.x, unit.s, t);
    const double term = t * (a1 - b1) / e - (1.0 - t) * (a0 - b0) / (1.0 - e) +
                        (b1 - b0) - ctx.tau;
    return term / q;
  }
  if (!unit.y) throw UsageError("eif: observational unit without outcome");
  const double guard = opts.dr_weight_guard;
  if (guard > 0.0) e = std::clamp(e, guard, 1.0 - guard);
  if (!(e > 0.0 && e < 1.0)) throw FitError("eif: propensity at the boundary");
  const double y = *unit.y;
  if (t == 1.0) {
    double g1 = nu.g_sx[1].predict_unit(unit.x, unit.s, t);
    if (opts.trim > 0.0) g1 = std::clamp(g1, opts.trim, 1.0 - opts.trim);
    if (guard > 0.0) g1 = std::clamp(g1, guard, 1.0 - guard);
    if (g1 >= 1.0) throw FitError("eif: fitted selection propensity g_1 = 1");
    const double a1 = nu.mu_sx[1].predict_unit(unit.x, unit.s, t);
    return g1 * (y - a1) / (e * (1.0 - g1)) / q;
  }
  double g0 = nu.g_sx[0].predict_unit(unit.x, unit.s, t);
  if (opts.trim > 0.0) g0 = std::clamp(g0, opts.trim, 1.0 - opts.trim);
  if (guard > 0.0) g0 = std::clamp(g0, guard, 1.0 - guard);
  if (g0 >= 1.0) throw FitError("eif: fitted selection propensity g_0 = 1");
  const double a0 = nu.mu_sx[0].predict_unit(unit.x, unit.s, t);
  return -g0 * (y - a0) / ((1.0 - e) * (1.0 - g0)) / q;
}

std::vector<SuitePoint> estimate_points(const FusedDataset& data,
                                        const SuiteConfig& cfg) {
  std::vector<SuitePoint> out;
  out.reserve(cfg.estimators.size());

  const auto wants = [&](EstimatorKind k) {
    return std::count(cfg.estimators.begin(), cfg.estimators.end(), k) > 0;
  };
  const bool want_ipw_true = wants(EstimatorKind::ipw_true);
  const bool want_ipw_est = wants(EstimatorKind::ipw_est);
  const bool want_dr = wants(EstimatorKind::dr);
  const bool want_si = wants(EstimatorKind::surrogate_index);

  std::optional<FittedModel> h_model;
  std::string h_error;
  if (want_ipw_true || want_ipw_est) {
    try {
      h_model = fit_h(data, cfg.nuisance);
    } catch (const Error& e) {
      h_error = e.what();
    }
  }
  const PropensityMode si_mode = cfg.surrogate_propensity.value_or(
      data.known_propensity ? PropensityMode::known : PropensityMode::estimated);
  std::optional<FittedModel> e_model;
  std::string e_error;
  if (want_ipw_est || want_dr || (want_si && si_mode == PropensityMode::estimated)) {
    try {
      e_model = fit_rct_propensity(data, cfg.nuisance);
    } catch (const Error& e) {
      e_error = e.what();
    }
  }
  std::optional<FittedModel> y_model;
  std::string y_error;
  if (want_si) {
    try {
      y_model = fit_surrogate_index(data, cfg.nuisance);
    } catch (const Error& e) {
      y_error = e.what();
    }
  }

  std::optional<NuisanceSet> nuis;
  std::string nuis_error;
  if (want_dr) {
    if (!e_model) {
      nuis_error = e_error;
    } else {
      try {
        NuisanceSet set;
        set.propensity_mode = PropensityMode::estimated;
        set.q_hat = data.q_hat();
        set.rho_hat = data.rho_hat();
        set.e_fit = *e_model;
        for (int t : {0, 1}) {
          set.mu_sx[static_cast<std::size_t>(t)] = fit_outcome_sx(data, t, cfg.nuisance);
        }
        for (int t : {0, 1}) {
          set.mu_x[static_cast<std::size_t>(t)] =
              fit_outcome_x(data, set.mu_sx, t, cfg.nuisance);
        }
        for (int t : {0, 1}) {
          set.g_sx[static_cast<std::size_t>(t)] = fit_selection(data, t, cfg.nuisance);
        }
        set.h = h_model ? *h_model : fit_h(data, cfg.nuisance);
        nuis = std::move(set);
      } catch (const Error& e) {
        nuis_error = e.what();
      }
    }
  }

  auto si_source = [&]() {
    if (si_mode == PropensityMode::estimated) {
      if (!e_model) throw FitError(e_error);
      return PropensitySource::estimated(*e_model);
    }
    return PropensitySource::known();
  };

  for (EstimatorKind kind : cfg.estimators) {
    SuitePoint point;
    point.estimator = kind;
    try {
      switch (kind) {
        case EstimatorKind::ipw_true: {
          if (!h_model) throw FitError(h_error);
          point.tau = estimate_ipw(data, *h_model, PropensitySource::known(),
                                   cfg.estimator)
                          .tau_hat;
          break;
        }
        case EstimatorKind::ipw_est: {
          if (!h_model) throw FitError(h_error);
          if (!e_model) throw FitError(e_error);
          point.tau = estimate_ipw(data, *h_model,
                                   PropensitySource::estimated(*e_model),
                                   cfg.estimator)
                          .tau_hat;
          break;
        }
        case EstimatorKind::dr: {
          if (!nuis) throw FitError(nuis_error);
          point.tau = estimate_dr(data, *nuis, cfg.estimator).tau_hat;
          break;
        }
        case EstimatorKind::surrogate_index: {
          if (!y_model) throw FitError(y_error);
          TauEstimate est;
          est.estimator = EstimatorKind::surrogate_index;
          Eigen::VectorXd e = si_source().at(data, data.rct_rows);
          if (cfg.estimator.trim > 0.0) apply_trim(e, cfg.estimator.trim);
          check_propensity_open(e, "surrogate index: treatment");
          point.tau = ipw_mean(data, y_model->predict(data, data.rct_rows), e);
          break;
        }
      }
    } catch (const Error& e) {
      point.error = e.what();
    }
    if (point.tau && cfg.with_plugin_se) {
      try {
        switch (kind) {
          case EstimatorKind::ipw_true:
            point.se = plugin_variance_ipw(data, *h_model, PropensitySource::known(),
                                           cfg.estimator)
                           .se;
            break;
          case EstimatorKind::ipw_est:
            point.se = plugin_variance_ipw(data, *h_model,
                                           PropensitySource::estimated(*e_model),
                                           cfg.estimator)
                           .se;
            break;
          case EstimatorKind::dr: {
            EifContext ctx{&*nuis, *point.tau, nuis->q_hat};
            point.se = plugin_variance_dr(data, ctx, cfg.estimator);
            break;
          }
          case EstimatorKind::surrogate_index:
            point.se =
                plugin_variance_ipw(data, *y_model, si_source(), cfg.estimator).se;
            break;
        }
      } catch (const Error& e) {
        point.se_error = e.what();
      }
    }
    out.push_back(std::move(point));
  }
  return out;
}

static json clause_to_json(const OverlapClause& clause) {
  json j;
  j["fitted"] = clause.fitted;
  if (clause.fitted) {
    j["min_fitted"] = clause.min_fitted;
    j["max_fitted"] = clause.max_fitted;
    j["violated"] = clause.violated;
  }
  if (!clause.error.empty()) j["error"] = clause.error;
  return j;
}

std::string to_json(const OverlapReport& report) {
  json j;
  j["epsilon"] = report.epsilon;
  j["rct_propensity"] = clause_to_json(report.rct_propensity);
  j["obs_propensity"] = clause_to_json(report.obs_propensity);
  j["rct_in_obs"] = clause_to_json(report.rct_in_obs);
  j["any_violation"] = report.any_violation();
  return j.dump();
}

std::string to_json(const TauEstimate& est, Eigen::Index n1, Eigen::Index n0) {
  json j;
  j["estimator"] = estimator_name(est.estimator);
  j["tau_hat"] = est.tau_hat;
  if (est.se) j["se"] = *est.se;
  if (est.ci_low && est.ci_high) j["ci"] = {*est.ci_low, *est.ci_high};
  if (est.p_value) j["p_value"] = *est.p_value;
  j["variance_method"] = variance_method_name(est.variance_method);
  j["n1"] = n1;
  j["n0"] = n0;
  if (est.diagnostics) j["diagnostics"] = json::parse(to_json(*est.diagnostics));
  if (!est.warnings.empty()) j["warnings"] = est.warnings;
  return j.dump();
}

}  // namespace longfuse
