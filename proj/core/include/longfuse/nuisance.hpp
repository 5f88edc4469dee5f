#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "longfuse/dataset.hpp"
#include "longfuse/glm.hpp"

namespace longfuse {

// Which dataset columns feed a working model, in order
// [x_cols..., s_cols..., T, T*x..., T*s...]. The intercept is handled by the
// GLM itself. Narrowing a design is how a deliberately misspecified working
// model is expressed.
struct DesignSpec {
  std::vector<int> x_cols;
  std::vector<int> s_cols;
  bool use_t = false;
  bool t_interactions = false;
  // Post-selection of built columns (indices into the full row); used to
  // drop aliased columns of saturated encodings. Empty keeps everything.
  std::vector<int> keep;

  Eigen::Index full_width() const {
    const auto base = static_cast<Eigen::Index>(x_cols.size() + s_cols.size());
    return base + (use_t ? 1 : 0) + (t_interactions ? base : 0);
  }
  Eigen::Index width() const {
    return keep.empty() ? full_width() : static_cast<Eigen::Index>(keep.size());
  }

  static DesignSpec x_only(const FusedDataset& data);
  static DesignSpec xs(const FusedDataset& data);
  static DesignSpec xst(const FusedDataset& data, bool interactions = false);
};

Eigen::MatrixXd build_design(const FusedDataset& data,
                             const std::vector<Eigen::Index>& rows,
                             const DesignSpec& spec);
Eigen::VectorXd build_design_row(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                                 double t, const DesignSpec& spec);

// Data subset a model was fitted on; asserted by the estimators.
enum class FitSubset { rct, obs, obs_arm, pooled_arm };

struct Provenance {
  FitSubset subset = FitSubset::obs;
  int arm = -1;  // treatment arm for obs_arm / pooled_arm
  Eigen::Index n_rows = 0;
};

// A GLM bound to the design it was fitted on, so predictions and gradients
// at arbitrary units stay consistent with the fit.
struct FittedModel {
  GlmFit fit;
  DesignSpec design;
  Provenance prov;

  Eigen::VectorXd predict(const FusedDataset& data,
                          const std::vector<Eigen::Index>& rows) const;
  Eigen::VectorXd predict_all(const FusedDataset& data) const;
  double predict_unit(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                      double t) const;
  Eigen::MatrixXd gradient(const FusedDataset& data,
                           const std::vector<Eigen::Index>& rows) const;
};

enum class PropensityMode { estimated, known };

struct NuisanceOptions {
  // Pseudo-outcome regression for mu_t(X) over all RCT units; false restricts
  // to the arm T=t.
  bool mu_x_all_rct = true;
  // Adds T-by-(X,S) interaction columns to the h model (used with saturated
  // discrete encodings).
  bool h_interact_t = false;
  // Saturated-encoding support: drop aliased design columns (empty cells)
  // instead of failing on rank deficiency, and accept quasi-separated
  // logistic fits whose fitted means have plateaued (boundary cells; the
  // estimators bound the resulting weights).
  bool drop_aliased = false;
  bool allow_boundary_fits = false;
  int max_iter = 100;
  double tol = 1e-8;
  // Per-model design overrides; defaults derive from the dataset shape.
  std::optional<DesignSpec> mu_sx_design;
  std::optional<DesignSpec> mu_x_design;
  std::optional<DesignSpec> e_design;
  std::optional<DesignSpec> g_design;
  std::optional<DesignSpec> h_design;
};

// The paper's five-model nuisance pipeline, arm-indexed where applicable.
struct NuisanceSet {
  std::array<FittedModel, 2> mu_sx;  // E[Y|X,S,T=t] fitted on observational arm t
  std::array<FittedModel, 2> mu_x;   // linear pseudo-outcome regression on X, RCT
  std::optional<FittedModel> e_fit;  // pr(T=1|X,G=1); absent in known mode
  std::array<FittedModel, 2> g_sx;   // pr(G=1|X,S,T=t) on the pooled stratum
  FittedModel h;                     // E[Y|X,S,T,G=0]
  PropensityMode propensity_mode = PropensityMode::estimated;
  double q_hat = 0.0;
  double rho_hat = 0.0;

  /// Treatment propensity at dataset rows, from the fitted model or the
  /// known per-unit values.
  Eigen::VectorXd propensity(const FusedDataset& data,
                             const std::vector<Eigen::Index>& rows) const;
};

/// E[Y|X,S,T=t] on observational units of arm t; family follows the outcome.
FittedModel fit_outcome_sx(const FusedDataset& data, int t,
                           const NuisanceOptions& opts = {});

/// Linear regression of mu_t(S,X) predictions on X over the RCT sample
/// (all units by default). Never clamped, also for binary outcomes.
FittedModel fit_outcome_x(const FusedDataset& data,
                          const std::array<FittedModel, 2>& mu_sx, int t,
                          const NuisanceOptions& opts = {});

/// Logistic regression of T on X over the RCT sample.
FittedModel fit_rct_propensity(const FusedDataset& data,
                               const NuisanceOptions& opts = {});

/// Logistic regression of G on (X,S) over all units with T=t.
FittedModel fit_selection(const FusedDataset& data, int t,
                          const NuisanceOptions& opts = {});

/// Regression of Y on (X,S,T) over observational units; family follows the
/// outcome.
FittedModel fit_h(const FusedDataset& data, const NuisanceOptions& opts = {});

/// Runs the full pipeline. In known mode the dataset must carry per-unit
/// propensities and no treatment propensity model is fitted.
NuisanceSet assemble(const FusedDataset& data,
                     PropensityMode mode = PropensityMode::estimated,
                     const NuisanceOptions& opts = {});

}  // namespace longfuse
