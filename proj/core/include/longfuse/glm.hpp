#pragma once

#include <optional>

#include <Eigen/Dense>

#include "longfuse/errors.hpp"

namespace longfuse {

enum class Family { linear, logistic };

struct GlmSpec {
  Family family = Family::linear;
  bool add_intercept = true;
  int max_iter = 100;
  double tol = 1e-8;  // max absolute coefficient change per IRLS step
};

// A fitted generalized linear model. `fisher_information` is the expected
// information averaged per observation: X'X / (sigma^2 n) for the linear
// family, X' diag(h(1-h)) X / n for the logistic family, with X the
// intercept-augmented design.
struct GlmFit {
  GlmSpec spec;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd fisher_information;
  double dispersion = 1.0;  // sigma^2 for linear, fixed 1 for logistic
  bool converged = false;
  int iterations = 0;
  Eigen::Index n_obs = 0;
  // Max absolute change of the fitted means over the final IRLS step. A
  // non-converged logistic fit with a tiny value here is quasi-separated:
  // the likelihood has plateaued while boundary coefficients drift.
  double final_mean_change = 0.0;

  Eigen::Index dim() const { return coefficients.size(); }

  /// Solves fisher_information * z = v. A linear fit with zero dispersion
  /// has infinite information; the solution is then exactly zero.
  Eigen::VectorXd information_solve(const Eigen::VectorXd& v) const;
};

/// Maximum-likelihood fit. Linear family solves the normal equations through
/// a rank-revealing QR; logistic runs IRLS from a zero start until the max
/// coefficient change drops below spec.tol. Optional nonnegative case
/// weights multiply each row's log-likelihood contribution.
GlmFit fit_glm(const GlmSpec& spec, const Eigen::MatrixXd& regressors,
               const Eigen::VectorXd& response,
               const std::optional<Eigen::VectorXd>& case_weights = {});

/// One IRLS step from `from` (logistic family); test hook for the
/// fixed-point property and a warm-start primitive.
Eigen::VectorXd irls_step(const GlmSpec& spec, const Eigen::MatrixXd& regressors,
                          const Eigen::VectorXd& response,
                          const std::optional<Eigen::VectorXd>& case_weights,
                          const Eigen::VectorXd& from);

/// Fitted means at new rows: X*beta (identity link) or expit(X*beta).
Eigen::VectorXd predict_mean(const GlmFit& fit, const Eigen::MatrixXd& regressors);

double predict_mean_one(const GlmFit& fit, const Eigen::VectorXd& row);

/// Row i is d(mean_i)/d(coefficients): the augmented row for the identity
/// link, h(1-h) times the augmented row for the logit link.
Eigen::MatrixXd mean_gradient(const GlmFit& fit, const Eigen::MatrixXd& regressors);

/// Average log-likelihood at the fitted coefficients evaluated on the given
/// data (test support for finite-difference checks).
double mean_log_likelihood(const GlmFit& fit, const Eigen::MatrixXd& regressors,
                           const Eigen::VectorXd& response,
                           const Eigen::VectorXd& coefficients);

namespace detail {
/// Prepends an intercept column when the spec asks for one.
Eigen::MatrixXd augment(const Eigen::MatrixXd& regressors, const GlmSpec& spec);
}  // namespace detail

}  // namespace longfuse
