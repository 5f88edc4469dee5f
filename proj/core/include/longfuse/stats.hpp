#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace longfuse {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, p in (0,1).
double normal_quantile(double p);

/// Numerically stable logistic function.
inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sample_mean(const Eigen::VectorXd& v) { return v.mean(); }

/// Unbiased sample variance (n-1 divisor); requires v.size() >= 2.
inline double sample_variance(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline double sample_sd(const Eigen::VectorXd& v) {
  return std::sqrt(sample_variance(v));
}

}  // namespace longfuse
