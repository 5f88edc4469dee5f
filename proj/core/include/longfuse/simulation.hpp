#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longfuse/estimators.hpp"

namespace longfuse::sim {

// Observational treatment-assignment logit.
enum class ObsAssign { u_plus_x, u_plus_xu, x_only };

// One of the sixteen data-generating cases. RCT units always draw
// U ~ N(0,1) and T ~ Bernoulli(1/2); error terms are standard normal.
struct SimCase {
  int id = 1;
  Family outcome_family = Family::linear;
  bool discrete_xs = false;       // X1,X2,S all Bernoulli
  bool u_shift_obs = false;       // observational U ~ N(1,4)
  bool nonlinear_surrogate = false;  // U^2 and squared-X surrogate forms
  double s_x_coef = 2.0;          // X coefficient inside the surrogate equation
  ObsAssign obs_assign = ObsAssign::u_plus_x;
  bool y_has_u = false;           // U enters the outcome equation directly
  double obs_x_mean = 1.0;        // continuous cases: N(obs_x_mean, 4 I2)

  static SimCase by_id(int id);
};

struct SimDraw {
  FusedDataset data;
  // Outcomes generated for RCT units, kept out of the dataset; oracle use only.
  Eigen::VectorXd rct_y;
};

SimDraw generate_draw(const SimCase& sc, Eigen::Index n1, Eigen::Index n0,
                      std::uint64_t seed);

/// Draws a fused dataset for the case. RCT outcomes are generated but stored
/// as absent; every unit carries the known true propensity 1/2.
FusedDataset generate(const SimCase& sc, Eigen::Index n1, Eigen::Index n0,
                      std::uint64_t seed);

struct OracleTau {
  double tau = 0.0;
  double se = 0.0;  // Monte Carlo standard error of the oracle mean
};

/// Monte Carlo oracle: oracle_n RCT units with both potential outcome pairs,
/// returning the mean difference and its standard error.
OracleTau mc_true_tau(const SimCase& sc, Eigen::Index oracle_n, std::uint64_t seed);

/// True tau for the case. Outcomes linear in S admit a deterministic value
/// (exact or by quadrature over U); binary outcomes fall back to the Monte
/// Carlo oracle.
double true_tau(const SimCase& sc, Eigen::Index oracle_n = 100000,
                std::uint64_t seed = 20240901);

/// Fully interacted encoding for discrete cases: x -> (X1, X2, X1*X2),
/// s -> (S, S*X1, S*X2, S*X1*X2). Requires binary X1, X2, scalar binary S.
FusedDataset saturate(const FusedDataset& data);

struct McConfig {
  SimCase sim_case;
  Eigen::Index n1 = 200;
  Eigen::Index n0 = 500;
  int reps = 1000;
  int bootstrap_b = 0;  // 0 disables the bootstrap columns
  std::uint64_t seed = 1;
  std::vector<EstimatorKind> estimators = {
      EstimatorKind::ipw_true, EstimatorKind::ipw_est, EstimatorKind::dr,
      EstimatorKind::surrogate_index};
  bool saturated = false;  // saturated encodings (discrete cases only)
  int threads = 0;
  double alpha = 0.05;
  NuisanceOptions nuisance;
  EstimatorOptions estimator;
  Eigen::Index oracle_n = 100000;
};

struct EstimatorSummary {
  EstimatorKind estimator = EstimatorKind::dr;
  int reps_used = 0;       // replicates with a point estimate
  int fail_count = 0;      // replicates whose point estimate failed
  double bias = 0.0;
  std::optional<double> sd;      // absent when fewer than two estimates
  std::optional<double> ese;     // mean plug-in standard error
  std::optional<double> cp95;    // plug-in interval coverage of true tau
  std::optional<double> ese_b;   // bootstrap analogues
  std::optional<double> cp95_b;
  int se_fail_count = 0;
  int boot_fail_count = 0;
};

struct McReport {
  int case_id = 0;
  Eigen::Index n1 = 0;
  Eigen::Index n0 = 0;
  int reps = 0;
  int bootstrap_b = 0;
  std::uint64_t seed = 0;
  double true_tau = 0.0;
  std::vector<EstimatorSummary> estimators;
};

/// Full Monte Carlo study: per replicate draw data, refit all nuisances,
/// compute the enabled estimators with plug-in (and optionally bootstrap)
/// standard errors, then aggregate Bias/SD/ESE/CP95/ESE.b/CP95.b against the
/// case's true tau. Replicates run in parallel on deterministic substreams.
McReport run_monte_carlo(const McConfig& cfg);

enum class TableFormat { csv, text };

/// CSV carries unscaled values; the text render multiplies by 100 in the
/// style of the tables this engine reproduces.
std::string emit_table(const std::vector<McReport>& reports, TableFormat format);

}  // namespace longfuse::sim
