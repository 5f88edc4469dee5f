#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longfuse/errors.hpp"
#include "longfuse/glm.hpp"

namespace longfuse {

// One observation. g=1 units come from the RCT and carry no outcome; g=0
// units come from the observational study and always carry one.
struct Unit {
  int g = 0;
  int t = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  std::optional<double> y;
};

// The fused two-sample data model. Immutable after construction; missing
// outcomes are stored as NaN internally and exposed as absent.
struct FusedDataset {
  Eigen::MatrixXd x;  // n x p covariates
  Eigen::MatrixXd s;  // n x k surrogates
  Eigen::VectorXd t;  // treatment, 0/1
  Eigen::VectorXd g;  // group, 1 = RCT
  Eigen::VectorXd y;  // outcome, NaN iff g = 1

  Family outcome_family = Family::linear;
  Eigen::Index n1 = 0;
  Eigen::Index n0 = 0;
  std::vector<Eigen::Index> rct_rows;
  std::vector<Eigen::Index> obs_rows;

  // Optional per-unit known treatment propensities (from a CSV column or a
  // constant); required by the true-propensity estimators.
  std::optional<Eigen::VectorXd> known_propensity;
  std::string propensity_col_name = "e_true";

  /// Validates every invariant (group/treatment coding, outcome presence
  /// pattern, non-empty arms in both groups) and fills the derived fields.
  static FusedDataset make(Eigen::MatrixXd x, Eigen::MatrixXd s,
                           Eigen::VectorXd t, Eigen::VectorXd g,
                           Eigen::VectorXd y,
                           std::optional<Family> family_override = {},
                           std::optional<Eigen::VectorXd> known_propensity = {});

  Eigen::Index n() const { return t.size(); }
  double q_hat() const { return static_cast<double>(n1) / static_cast<double>(n()); }
  double rho_hat() const { return static_cast<double>(n1) / static_cast<double>(n0); }

  Unit unit(Eigen::Index i) const;

  static constexpr double missing = std::numeric_limits<double>::quiet_NaN();
};

// Column mapping for CSV ingestion. Empty s/x lists auto-detect the
// canonical s1..sk / x1..xp names.
struct ColumnSchema {
  std::string g = "g";
  std::string t = "t";
  std::string y = "y";
  std::vector<std::string> s_cols;
  std::vector<std::string> x_cols;
  std::optional<std::string> propensity_col;
  // For split RCT/observational files without a group column.
  std::optional<int> implied_g;
};

// Parsed but unvalidated CSV content; lets callers combine split RCT and
// observational files before dataset validation.
struct RawColumns {
  Eigen::MatrixXd x;
  Eigen::MatrixXd s;
  Eigen::VectorXd t;
  Eigen::VectorXd g;
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXd> known_propensity;
};

RawColumns load_csv_columns(const std::string& path, const ColumnSchema& schema = {});

/// Vertical concatenation of two column sets; shapes must agree.
RawColumns concat(const RawColumns& a, const RawColumns& b);

/// Validates raw columns into a dataset.
FusedDataset from_columns(RawColumns columns,
                          std::optional<Family> family_override = {});

/// Reads a UTF-8 comma-separated file with a header row. Empty y cells mean
/// missing; y must be empty on every g=1 row and present on every g=0 row.
/// The outcome family is inferred (all observed y in {0,1} => binary) unless
/// overridden.
FusedDataset load_csv(const std::string& path, const ColumnSchema& schema = {},
                      std::optional<Family> family_override = {});

/// Writes canonical columns g,t,y,s1..sk,x1..xp (plus the known-propensity
/// column when present) with round-trip-exact numeric formatting.
void write_csv(const FusedDataset& data, const std::string& path);

struct OverlapClause {
  bool fitted = false;
  double min_fitted = std::numeric_limits<double>::quiet_NaN();
  double max_fitted = std::numeric_limits<double>::quiet_NaN();
  bool violated = false;
  std::string error;  // non-empty when the underlying logistic fit failed
};

// Fitted-probability extremes for the three strict-overlap clauses. Purely
// advisory: estimation proceeds under violations, the report travels with
// the results.
struct OverlapReport {
  double epsilon = 0.05;
  OverlapClause rct_propensity;  // pr(T=1|X,G=1), checked against [eps, 1-eps]
  OverlapClause obs_propensity;  // pr(T=1|X,S,G=0), checked against [eps, 1-eps]
  OverlapClause rct_in_obs;      // pr(G=0|X,S) at RCT units, lower bound only

  bool any_violation() const {
    return rct_propensity.violated || obs_propensity.violated ||
           rct_in_obs.violated;
  }
  bool any_failure() const {
    return !rct_propensity.error.empty() || !obs_propensity.error.empty() ||
           !rct_in_obs.error.empty();
  }
};

/// Fits the three overlap screening models and flags fitted values outside
/// the epsilon margin. Never mutates the dataset and never throws on fit
/// failure; failures are reported per clause.
OverlapReport overlap_diagnostics(const FusedDataset& data, double epsilon);

/// Rows of m selected by index, in order.
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<Eigen::Index>& rows);
Eigen::VectorXd select_rows(const Eigen::VectorXd& v,
                            const std::vector<Eigen::Index>& rows);

/// Horizontal concatenation [a b].
Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace longfuse
