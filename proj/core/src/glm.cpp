#include "longfuse/glm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "longfuse/stats.hpp"

namespace longfuse {

namespace detail {

Eigen::MatrixXd augment(const Eigen::MatrixXd& regressors, const GlmSpec& spec) {
  if (!spec.add_intercept) return regressors;
  Eigen::MatrixXd out(regressors.rows(), regressors.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(regressors.cols()) = regressors;
  return out;
}

// Weighted least squares through column-pivoted QR on sqrt(w)-scaled rows.
Eigen::VectorXd wls_solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& z,
                          const Eigen::VectorXd& w) {
  const Eigen::ArrayXd sw = w.array().sqrt();
  const Eigen::MatrixXd a = design.array().colwise() * sw;
  const Eigen::VectorXd b = z.array() * sw;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw FitError("glm: rank-deficient design (rank " +
                   std::to_string(qr.rank()) + " < " +
                   std::to_string(design.cols()) + " columns)");
  }
  return qr.solve(b);
}

}  // namespace detail

Eigen::VectorXd GlmFit::information_solve(const Eigen::VectorXd& v) const {
  if (spec.family == Family::linear && dispersion == 0.0) {
    return Eigen::VectorXd::Zero(v.size());
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(fisher_information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw FitError("glm: singular Fisher information matrix");
  }
  const Eigen::VectorXd d = ldlt.vectorD();
  if (d.minCoeff() <= 1e-12 * d.maxCoeff()) {
    throw FitError("glm: numerically singular Fisher information matrix");
  }
  return ldlt.solve(v);
}

Eigen::VectorXd irls_step(const GlmSpec& spec, const Eigen::MatrixXd& regressors,
                          const Eigen::VectorXd& response,
                          const std::optional<Eigen::VectorXd>& case_weights,
                          const Eigen::VectorXd& from) {
  const Eigen::MatrixXd design = detail::augment(regressors, spec);
  const Eigen::VectorXd eta = design * from;
  Eigen::VectorXd mu(eta.size()), w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu[i] = expit(eta[i]);
    w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
  }
  Eigen::VectorXd z = eta + ((response - mu).array() / w.array()).matrix();
  if (case_weights) w = w.cwiseProduct(*case_weights);
  return detail::wls_solve(design, z, w);
}

GlmFit fit_glm(const GlmSpec& spec, const Eigen::MatrixXd& regressors,
               const Eigen::VectorXd& response,
               const std::optional<Eigen::VectorXd>& case_weights) {
  if (spec.tol <= 0.0 || spec.max_iter < 1) {
    throw UsageError("glm: tol must be > 0 and max_iter >= 1");
  }
  const Eigen::Index n = regressors.rows();
  if (response.size() != n) {
    throw UsageError("glm: response length does not match regressor rows");
  }
  if (case_weights && case_weights->size() != n) {
    throw UsageError("glm: case weight length does not match regressor rows");
  }
  const Eigen::MatrixXd design = detail::augment(regressors, spec);
  const Eigen::Index d = design.cols();
  if (n <= d) {
    throw FitError("glm: need more observations than coefficients (n=" +
                   std::to_string(n) + ", d=" + std::to_string(d) + ")");
  }

  GlmFit fit;
  fit.spec = spec;
  fit.n_obs = n;

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd& cw = case_weights ? *case_weights : ones;

  if (spec.family == Family::linear) {
    fit.coefficients = detail::wls_solve(design, response, cw);
    const Eigen::VectorXd resid = response - design * fit.coefficients;
    const double rss = (resid.array().square() * cw.array()).sum();
    fit.dispersion = rss / static_cast<double>(n - d);
    if (fit.dispersion < 0.0) fit.dispersion = 0.0;
    Eigen::MatrixXd xtwx =
        design.transpose() * (design.array().colwise() * cw.array()).matrix();
    if (fit.dispersion > 0.0) {
      fit.fisher_information = xtwx / (fit.dispersion * static_cast<double>(n));
    } else {
      fit.fisher_information = Eigen::MatrixXd::Constant(
          d, d, std::numeric_limits<double>::infinity());
    }
    fit.converged = true;
    fit.iterations = 1;
    return fit;
  }

  // Logistic family.
  for (Eigen::Index i = 0; i < n; ++i) {
    if (response[i] != 0.0 && response[i] != 1.0) {
      throw UsageError("glm: logistic response must be 0 or 1");
    }
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd prev_mu =
      Eigen::VectorXd::Constant(n, 0.5);  // fitted means at beta = 0
  double mean_change = 1.0;
  bool converged = false;
  int iter = 0;
  while (iter < spec.max_iter) {
    ++iter;
    Eigen::VectorXd next = irls_step(spec, regressors, response, case_weights, beta);
    const double delta = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    Eigen::VectorXd mu =
        (design * beta).unaryExpr([](double e) { return expit(e); });
    mean_change = (mu - prev_mu).cwiseAbs().maxCoeff();
    prev_mu = mu;
    if (beta.cwiseAbs().maxCoeff() > 1e6) {
      throw FitError("glm: coefficients diverging, separation suspected");
    }
    if (delta < spec.tol) {
      converged = true;
      break;
    }
  }
  fit.coefficients = beta;
  fit.converged = converged;
  fit.iterations = iter;
  fit.dispersion = 1.0;
  fit.final_mean_change = mean_change;

  Eigen::VectorXd mu = prev_mu;
  const Eigen::ArrayXd w = mu.array() * (1.0 - mu.array()) * cw.array();
  fit.fisher_information =
      design.transpose() * (design.array().colwise() * w).matrix() /
      static_cast<double>(n);
  return fit;
}

Eigen::VectorXd predict_mean(const GlmFit& fit, const Eigen::MatrixXd& regressors) {
  const Eigen::MatrixXd design = detail::augment(regressors, fit.spec);
  if (design.cols() != fit.dim()) {
    throw UsageError("glm: prediction design has " + std::to_string(design.cols()) +
                     " columns, fit has " + std::to_string(fit.dim()));
  }
  Eigen::VectorXd eta = design * fit.coefficients;
  if (fit.spec.family == Family::linear) return eta;
  return eta.unaryExpr([](double e) { return expit(e); });
}

double predict_mean_one(const GlmFit& fit, const Eigen::VectorXd& row) {
  const Eigen::Index d = fit.dim();
  double eta = 0.0;
  if (fit.spec.add_intercept) {
    if (row.size() + 1 != d) throw UsageError("glm: prediction row width mismatch");
    eta = fit.coefficients[0] + fit.coefficients.tail(d - 1).dot(row);
  } else {
    if (row.size() != d) throw UsageError("glm: prediction row width mismatch");
    eta = fit.coefficients.dot(row);
  }
  return fit.spec.family == Family::linear ? eta : expit(eta);
}

Eigen::MatrixXd mean_gradient(const GlmFit& fit, const Eigen::MatrixXd& regressors) {
  Eigen::MatrixXd design = detail::augment(regressors, fit.spec);
  if (design.cols() != fit.dim()) {
    throw UsageError("glm: gradient design width mismatch");
  }
  if (fit.spec.family == Family::linear) return design;
  const Eigen::VectorXd eta = design * fit.coefficients;
  const Eigen::ArrayXd h = eta.unaryExpr([](double e) { return expit(e); }).array();
  return design.array().colwise() * (h * (1.0 - h));
}

double mean_log_likelihood(const GlmFit& fit, const Eigen::MatrixXd& regressors,
                           const Eigen::VectorXd& response,
                           const Eigen::VectorXd& coefficients) {
  const Eigen::MatrixXd design = detail::augment(regressors, fit.spec);
  const Eigen::VectorXd eta = design * coefficients;
  const Eigen::Index n = design.rows();
  double ll = 0.0;
  if (fit.spec.family == Family::logistic) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // y*eta - log(1+exp(eta)), stable in both tails
      const double log1pe =
          eta[i] > 0 ? eta[i] + std::log1p(std::exp(-eta[i])) : std::log1p(std::exp(eta[i]));
      ll += response[i] * eta[i] - log1pe;
    }
  } else {
    const double s2 = fit.dispersion;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = response[i] - eta[i];
      ll += -0.5 * r * r / s2 - 0.5 * std::log(2.0 * M_PI * s2);
    }
  }
  return ll / static_cast<double>(n);
}

}  // namespace longfuse
