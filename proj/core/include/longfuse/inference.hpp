#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "longfuse/estimators.hpp"
#include "longfuse/rng.hpp"

namespace longfuse {

// Plug-in pieces of the IPW asymptotic variances on the sqrt(n1) scale:
// var_ipw_true = V1 + rho * B1' I(kappa)^-1 B1, var_ipw_est = var_ipw_true - V2
// with V2 = B2' I(gamma)^-1 B2. In known-propensity mode B2/I_gamma are empty
// and V2 = 0.
struct AsymptoticComponents {
  double V1 = 0.0;
  double V2 = 0.0;
  Eigen::VectorXd B1;
  Eigen::VectorXd B2;
  Eigen::MatrixXd I_kappa;
  Eigen::MatrixXd I_gamma;
  double rho = 0.0;
  double var_ipw_true = 0.0;
  double var_ipw_est = 0.0;
};

struct IpwVariance {
  double se = 0.0;
  AsymptoticComponents components;
};

/// Plug-in standard error for either IPW estimator. The propensity source
/// selects which variance applies: known values give the V1 + kappa-term
/// form, a fitted model additionally subtracts V2.
IpwVariance plugin_variance_ipw(const FusedDataset& data,
                                const FittedModel& h_model,
                                const PropensitySource& propensity,
                                const EstimatorOptions& opts = {});

/// Plug-in standard error of the doubly robust estimator:
/// sqrt(mean(phi_hat^2) / n) over the pooled sample, with ctx.tau = tau_dr.
double plugin_variance_dr(const FusedDataset& data, const EifContext& ctx,
                          const EstimatorOptions& opts = {});

struct WaldResult {
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  bool degenerate_se = false;
};

/// Normal-theory interval tau +- z_{1-alpha/2} se and two-sided p-value for
/// H0: tau = 0. A zero se yields the point interval with p in {0,1} and the
/// degenerate flag set.
WaldResult wald_inference(double tau_hat, double se, double alpha);

/// Applies wald_inference to a point estimate in place.
void attach_wald(TauEstimate& estimate, double se, double alpha,
                 VarianceMethod method);

/// Stratified resample: n1 RCT units and n0 observational units drawn with
/// replacement by position within each stratum.
FusedDataset resample_stratified(const FusedDataset& data, Rng& rng);

struct BootstrapConfig {
  int b = 200;
  std::uint64_t seed = 0;
  int threads = 0;              // 0 = resolve from env/hardware
  double max_failure_rate = 0.2;
};

struct BootstrapResult {
  double se = 0.0;
  Eigen::VectorXd replicates;   // successful replicate estimates, in order
  int failures = 0;
  int attempted = 0;
  std::string first_error;
};

// All requested estimators recomputed on each of B stratified resamples,
// with every nuisance model refitted. NaN marks a failed (estimator,
// replicate) cell.
struct MultiBootstrap {
  Eigen::MatrixXd replicates;   // b x estimators
  std::vector<int> failures;
  std::vector<std::string> first_errors;
};

MultiBootstrap bootstrap_replicates(const FusedDataset& data,
                                    const SuiteConfig& cfg,
                                    const BootstrapConfig& bcfg);

/// Bootstrap standard error of one estimator; errors out when more than
/// max_failure_rate of the replicates fail.
BootstrapResult bootstrap_se(const FusedDataset& data, EstimatorKind estimator,
                             const SuiteConfig& cfg, const BootstrapConfig& bcfg);

/// Generic engine over an arbitrary estimator function; Error-derived
/// exceptions from the function count as replicate failures.
BootstrapResult bootstrap_se(const FusedDataset& data,
                             const std::function<double(const FusedDataset&)>& estimator,
                             const BootstrapConfig& bcfg);

}  // namespace longfuse
