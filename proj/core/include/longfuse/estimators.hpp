#pragma once

#include <optional>
#include <string>
#include <vector>

#include "longfuse/dataset.hpp"
#include "longfuse/nuisance.hpp"

namespace longfuse {

enum class EstimatorKind { ipw_true, ipw_est, dr, surrogate_index };

const char* estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> estimator_from_name(const std::string& name);

enum class VarianceMethod { plugin, bootstrap, none };

const char* variance_method_name(VarianceMethod method);

struct TauEstimate {
  EstimatorKind estimator = EstimatorKind::dr;
  double tau_hat = 0.0;
  std::optional<double> se;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::optional<double> p_value;
  VarianceMethod variance_method = VarianceMethod::none;
  std::optional<OverlapReport> diagnostics;
  std::vector<std::string> warnings;
};

struct EstimatorOptions {
  // When positive, clips fitted treatment and selection propensities into
  // [trim, 1-trim] instead of failing at the boundary; a warning is recorded.
  double trim = 0.0;
  // Stability guard on the doubly robust estimator's observational residual
  // line: the fitted selection propensities and the treatment propensities
  // evaluated at observational units (both extrapolations of models fitted
  // elsewhere) are clipped into [guard, 1-guard]. The residual line is
  // conditionally mean-zero under a correct outcome model for any weights,
  // so the guard never breaks double robustness; it only bounds the inverse
  // weights. Zero disables.
  double dr_weight_guard = 0.15;
};

// Where treatment propensities come from: the per-unit known values carried
// by the dataset, or a fitted logistic model.
struct PropensitySource {
  PropensityMode mode = PropensityMode::estimated;
  const FittedModel* model = nullptr;

  static PropensitySource known() { return {PropensityMode::known, nullptr}; }
  static PropensitySource estimated(const FittedModel& m) {
    return {PropensityMode::estimated, &m};
  }

  Eigen::VectorXd at(const FusedDataset& data,
                     const std::vector<Eigen::Index>& rows) const;
};

/// IPW estimator: mean over RCT units of T*h/e - (1-T)*h/(1-e) with h from
/// the transported outcome regression. Tagged ipw_true for known
/// propensities, ipw_est for fitted ones.
TauEstimate estimate_ipw(const FusedDataset& data, const FittedModel& h_model,
                         const PropensitySource& propensity,
                         const EstimatorOptions& opts = {});

/// Doubly robust estimator: pooled sample average of the influence-function
/// summand with G/q and (1-G)/q weighting.
TauEstimate estimate_dr(const FusedDataset& data, const NuisanceSet& nuisances,
                        const EstimatorOptions& opts = {});

/// Pooled regression of Y on (X,S) over observational data, ignoring T.
FittedModel fit_surrogate_index(const FusedDataset& data,
                                const NuisanceOptions& opts = {});

/// Surrogate-index baseline: IPW applied to the pooled E[Y|S,X,G=0] fit.
TauEstimate estimate_surrogate_index(const FusedDataset& data,
                                     const PropensitySource& propensity,
                                     const EstimatorOptions& opts = {});

struct EifContext {
  const NuisanceSet* nuisances = nullptr;
  double tau = 0.0;
  double q = 0.0;
};

/// Efficient influence function at one unit: for g=1 units only the RCT line
/// contributes, for g=0 units only the residual line.
double eif_value(const Unit& unit, const EifContext& ctx,
                 const EstimatorOptions& opts = {});

/// EIF evaluated at every dataset row; its sample mean is zero at
/// tau = tau_dr by construction.
Eigen::VectorXd eif_values(const FusedDataset& data, const EifContext& ctx,
                           const EstimatorOptions& opts = {});

// Point estimates for several estimators on one dataset, sharing nuisance
// fits. A failed component fails exactly the estimators that depend on it.
struct SuiteConfig {
  std::vector<EstimatorKind> estimators = {
      EstimatorKind::ipw_true, EstimatorKind::ipw_est, EstimatorKind::dr,
      EstimatorKind::surrogate_index};
  NuisanceOptions nuisance;
  EstimatorOptions estimator;
  // Propensity source for the surrogate-index baseline; defaults to known
  // values when the dataset carries them, the fitted model otherwise.
  std::optional<PropensityMode> surrogate_propensity;
  // Also compute each estimator's plug-in standard error.
  bool with_plugin_se = false;
};

struct SuitePoint {
  EstimatorKind estimator;
  std::optional<double> tau;
  std::string error;  // non-empty when this estimator failed
  std::optional<double> se;  // plug-in, when requested
  std::string se_error;
};

std::vector<SuitePoint> estimate_points(const FusedDataset& data,
                                        const SuiteConfig& cfg);

/// JSON object for one estimate (spec'd result schema).
std::string to_json(const TauEstimate& estimate, Eigen::Index n1, Eigen::Index n0);
std::string to_json(const OverlapReport& report);

}  // namespace longfuse
