#include "longfuse/nuisance.hpp"

#include <cmath>
#include <numeric>

namespace longfuse {

namespace {

std::vector<int> iota_cols(Eigen::Index count) {
  std::vector<int> cols(static_cast<std::size_t>(count));
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

GlmSpec make_spec(Family family, const NuisanceOptions& opts) {
  GlmSpec spec;
  spec.family = family;
  spec.max_iter = opts.max_iter;
  spec.tol = opts.tol;
  return spec;
}

std::vector<Eigen::Index> rows_with_arm(const FusedDataset& data,
                                        const std::vector<Eigen::Index>& base,
                                        int t) {
  std::vector<Eigen::Index> out;
  for (auto i : base) {
    if (data.t[i] == static_cast<double>(t)) out.push_back(i);
  }
  return out;
}

std::vector<Eigen::Index> all_rows_with_arm(const FusedDataset& data, int t) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.t[i] == static_cast<double>(t)) out.push_back(i);
  }
  return out;
}

// Greedy rank-revealing selection of linearly independent design columns,
// with the intercept always retained.
std::vector<int> independent_columns(const Eigen::MatrixXd& design) {
  Eigen::MatrixXd with_icpt(design.rows(), design.cols() + 1);
  with_icpt.col(0).setOnes();
  with_icpt.rightCols(design.cols()) = design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(with_icpt);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  std::vector<int> kept;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = 0; i < rank; ++i) {
    const int col = perm[i];
    if (col > 0) kept.push_back(col - 1);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

FittedModel fit_on(const FusedDataset& data, const std::vector<Eigen::Index>& rows,
                   const Eigen::VectorXd& response, Family family,
                   const DesignSpec& design, Provenance prov,
                   const NuisanceOptions& opts, const std::string& label) {
  try {
    FittedModel m;
    m.design = design;
    m.prov = prov;
    m.prov.n_rows = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd d = build_design(data, rows, design);
    if (opts.drop_aliased) {
      const std::vector<int> kept = independent_columns(d);
      if (static_cast<Eigen::Index>(kept.size()) < d.cols()) {
        DesignSpec pruned = design;
        if (pruned.keep.empty()) {
          pruned.keep = kept;
        } else {
          std::vector<int> composed;
          for (int k : kept) composed.push_back(pruned.keep[k]);
          pruned.keep = composed;
        }
        m.design = pruned;
        d = build_design(data, rows, pruned);
      }
    }
    m.fit = fit_glm(make_spec(family, opts), d, response);
    const bool boundary_ok = opts.allow_boundary_fits &&
                             family == Family::logistic &&
                             m.fit.final_mean_change < 1e-6;
    if (!m.fit.converged && !boundary_ok) {
      throw FitError("IRLS did not converge within " +
                     std::to_string(opts.max_iter) + " iterations");
    }
    return m;
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw FitError(label + ": " + e.what());
  }
}

}  // namespace

DesignSpec DesignSpec::x_only(const FusedDataset& data) {
  DesignSpec d;
  d.x_cols = iota_cols(data.x.cols());
  return d;
}

DesignSpec DesignSpec::xs(const FusedDataset& data) {
  DesignSpec d = x_only(data);
  d.s_cols = iota_cols(data.s.cols());
  return d;
}

DesignSpec DesignSpec::xst(const FusedDataset& data, bool interactions) {
  DesignSpec d = xs(data);
  d.use_t = true;
  d.t_interactions = interactions;
  return d;
}

namespace {

Eigen::VectorXd full_design_row(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                                double t, const DesignSpec& spec) {
  Eigen::VectorXd out(spec.full_width());
  Eigen::Index j = 0;
  for (int c : spec.x_cols) out[j++] = x[c];
  for (int c : spec.s_cols) out[j++] = s[c];
  if (spec.use_t) {
    out[j++] = t;
    if (spec.t_interactions) {
      for (int c : spec.x_cols) out[j++] = t * x[c];
      for (int c : spec.s_cols) out[j++] = t * s[c];
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd build_design(const FusedDataset& data,
                             const std::vector<Eigen::Index>& rows,
                             const DesignSpec& spec) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd out(n, spec.width());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    const Eigen::VectorXd row = full_design_row(data.x.row(r), data.s.row(r),
                                                data.t[r], spec);
    if (spec.keep.empty()) {
      out.row(i) = row;
    } else {
      for (std::size_t k = 0; k < spec.keep.size(); ++k) {
        out(i, static_cast<Eigen::Index>(k)) = row[spec.keep[k]];
      }
    }
  }
  return out;
}

Eigen::VectorXd build_design_row(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                                 double t, const DesignSpec& spec) {
  const Eigen::VectorXd row = full_design_row(x, s, t, spec);
  if (spec.keep.empty()) return row;
  Eigen::VectorXd out(static_cast<Eigen::Index>(spec.keep.size()));
  for (std::size_t k = 0; k < spec.keep.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = row[spec.keep[k]];
  }
  return out;
}

Eigen::VectorXd FittedModel::predict(const FusedDataset& data,
                                     const std::vector<Eigen::Index>& rows) const {
  return predict_mean(fit, build_design(data, rows, design));
}

Eigen::VectorXd FittedModel::predict_all(const FusedDataset& data) const {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.n()));
  std::iota(rows.begin(), rows.end(), 0);
  return predict(data, rows);
}

double FittedModel::predict_unit(const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                                 double t) const {
  return predict_mean_one(fit, build_design_row(x, s, t, design));
}

Eigen::MatrixXd FittedModel::gradient(const FusedDataset& data,
                                      const std::vector<Eigen::Index>& rows) const {
  return mean_gradient(fit, build_design(data, rows, design));
}

Eigen::VectorXd NuisanceSet::propensity(const FusedDataset& data,
                                        const std::vector<Eigen::Index>& rows) const {
  if (propensity_mode == PropensityMode::estimated) {
    return e_fit->predict(data, rows);
  }
  if (!data.known_propensity) {
    throw UsageError("nuisance: known propensity mode but the dataset carries none");
  }
  return select_rows(*data.known_propensity, rows);
}

FittedModel fit_outcome_sx(const FusedDataset& data, int t,
                           const NuisanceOptions& opts) {
  const auto rows = rows_with_arm(data, data.obs_rows, t);
  const DesignSpec design = opts.mu_sx_design.value_or(DesignSpec::xs(data));
  const Eigen::VectorXd y = select_rows(data.y, rows);
  return fit_on(data, rows, y, data.outcome_family, design,
                {FitSubset::obs_arm, t, 0}, opts,
                "mu_" + std::to_string(t) + "(S,X) on observational arm t=" +
                    std::to_string(t));
}

FittedModel fit_outcome_x(const FusedDataset& data,
                          const std::array<FittedModel, 2>& mu_sx, int t,
                          const NuisanceOptions& opts) {
  const std::vector<Eigen::Index>& rows =
      opts.mu_x_all_rct ? data.rct_rows : rows_with_arm(data, data.rct_rows, t);
  const Eigen::VectorXd pseudo = mu_sx[static_cast<std::size_t>(t)].predict(data, rows);
  const DesignSpec design = opts.mu_x_design.value_or(DesignSpec::x_only(data));
  return fit_on(data, rows, pseudo, Family::linear, design, {FitSubset::rct, t, 0},
                opts,
                "mu_" + std::to_string(t) + "(X) pseudo-outcome regression on RCT");
}

FittedModel fit_rct_propensity(const FusedDataset& data,
                               const NuisanceOptions& opts) {
  const DesignSpec design = opts.e_design.value_or(DesignSpec::x_only(data));
  const Eigen::VectorXd t = select_rows(data.t, data.rct_rows);
  return fit_on(data, data.rct_rows, t, Family::logistic, design,
                {FitSubset::rct, -1, 0}, opts, "e(X) treatment propensity on RCT");
}

FittedModel fit_selection(const FusedDataset& data, int t,
                          const NuisanceOptions& opts) {
  const auto rows = all_rows_with_arm(data, t);
  const Eigen::VectorXd g = select_rows(data.g, rows);
  const double mean_g = g.size() > 0 ? g.mean() : 0.0;
  if (rows.empty() || mean_g == 0.0 || mean_g == 1.0) {
    throw FitError("g_" + std::to_string(t) +
                   "(S,X): stratum T=" + std::to_string(t) +
                   " does not contain both data sources");
  }
  const DesignSpec design = opts.g_design.value_or(DesignSpec::xs(data));
  return fit_on(data, rows, g, Family::logistic, design,
                {FitSubset::pooled_arm, t, 0}, opts,
                "g_" + std::to_string(t) + "(S,X) selection model on pooled stratum");
}

FittedModel fit_h(const FusedDataset& data, const NuisanceOptions& opts) {
  const DesignSpec design =
      opts.h_design.value_or(DesignSpec::xst(data, opts.h_interact_t));
  const Eigen::VectorXd y = select_rows(data.y, data.obs_rows);
  return fit_on(data, data.obs_rows, y, data.outcome_family, design,
                {FitSubset::obs, -1, 0}, opts, "h(X,S,T) on observational data");
}

NuisanceSet assemble(const FusedDataset& data, PropensityMode mode,
                     const NuisanceOptions& opts) {
  NuisanceSet set;
  set.propensity_mode = mode;
  set.q_hat = data.q_hat();
  set.rho_hat = data.rho_hat();
  for (int t : {0, 1}) {
    set.mu_sx[static_cast<std::size_t>(t)] = fit_outcome_sx(data, t, opts);
  }
  for (int t : {0, 1}) {
    set.mu_x[static_cast<std::size_t>(t)] = fit_outcome_x(data, set.mu_sx, t, opts);
  }
  if (mode == PropensityMode::estimated) {
    set.e_fit = fit_rct_propensity(data, opts);
  } else if (!data.known_propensity) {
    throw UsageError(
        "assemble: known propensity mode requires per-unit propensities");
  }
  for (int t : {0, 1}) {
    set.g_sx[static_cast<std::size_t>(t)] = fit_selection(data, t, opts);
  }
  set.h = fit_h(data, opts);
  return set;
}

}  // namespace longfuse
