#include "longfuse/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace longfuse {

namespace {

bool is_binary01(double v) { return v == 0.0 || v == 1.0; }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no,
                  const std::string& col) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError("load_csv: malformed numeric cell '" + cell + "' in column " +
                    col + ", line " + std::to_string(line_no));
  }
  return v;
}

// Matches prefix + positive integer, returns the integer or -1.
int indexed_name(const std::string& name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return -1;
  int idx = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
  if (ec != std::errc() || ptr != name.data() + name.size() || idx < 1) return -1;
  return idx;
}

void format_value(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

FusedDataset FusedDataset::make(Eigen::MatrixXd x, Eigen::MatrixXd s,
                                Eigen::VectorXd t, Eigen::VectorXd g,
                                Eigen::VectorXd y,
                                std::optional<Family> family_override,
                                std::optional<Eigen::VectorXd> known_propensity) {
  const Eigen::Index n = t.size();
  if (n == 0) throw DataError("dataset: empty");
  if (x.rows() != n || s.rows() != n || g.size() != n || y.size() != n) {
    throw DataError("dataset: field lengths disagree");
  }
  if (x.cols() < 1 || s.cols() < 1) {
    throw DataError("dataset: need at least one covariate and one surrogate");
  }
  if (!x.allFinite() || !s.allFinite()) {
    throw DataError("dataset: non-finite covariate or surrogate value");
  }
  if (known_propensity && known_propensity->size() != n) {
    throw DataError("dataset: known propensity length disagrees");
  }

  FusedDataset out;
  Eigen::Index arm_counts[2][2] = {{0, 0}, {0, 0}};
  bool all_binary = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!is_binary01(g[i])) {
      throw DataError("dataset: g must be 0 or 1 (row " + std::to_string(i) + ")");
    }
    if (!is_binary01(t[i])) {
      throw DataError("dataset: t must be 0 or 1 (row " + std::to_string(i) + ")");
    }
    const bool rct = g[i] == 1.0;
    const bool has_y = !std::isnan(y[i]);
    if (rct && has_y) {
      throw DataError("dataset: outcome present in RCT row " + std::to_string(i));
    }
    if (!rct && !has_y) {
      throw DataError("dataset: outcome missing in observational row " +
                      std::to_string(i));
    }
    if (has_y && !std::isfinite(y[i])) {
      throw DataError("dataset: non-finite outcome in row " + std::to_string(i));
    }
    if (has_y && !is_binary01(y[i])) all_binary = false;
    arm_counts[rct ? 1 : 0][t[i] == 1.0 ? 1 : 0]++;
    if (rct) {
      out.rct_rows.push_back(i);
    } else {
      out.obs_rows.push_back(i);
    }
  }
  out.n1 = static_cast<Eigen::Index>(out.rct_rows.size());
  out.n0 = static_cast<Eigen::Index>(out.obs_rows.size());
  if (out.n1 < 1 || out.n0 < 1) {
    throw DataError("dataset: both an RCT and an observational sample are required");
  }
  for (int grp : {0, 1}) {
    for (int arm : {0, 1}) {
      if (arm_counts[grp][arm] == 0) {
        throw DataError(std::string("dataset: empty treatment arm t=") +
                        std::to_string(arm) + " in " +
                        (grp == 1 ? "RCT" : "observational") + " sample");
      }
    }
  }
  out.outcome_family =
      family_override ? *family_override : (all_binary ? Family::logistic : Family::linear);
  if (out.outcome_family == Family::logistic && !all_binary) {
    throw DataError("dataset: binary outcome family but an observed y is not 0/1");
  }
  if (known_propensity) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = (*known_propensity)[i];
      if (!(e > 0.0 && e < 1.0)) {
        throw DataError("dataset: known propensity outside (0,1) in row " +
                        std::to_string(i));
      }
    }
  }
  out.x = std::move(x);
  out.s = std::move(s);
  out.t = std::move(t);
  out.g = std::move(g);
  out.y = std::move(y);
  out.known_propensity = std::move(known_propensity);
  return out;
}

Unit FusedDataset::unit(Eigen::Index i) const {
  Unit u;
  u.g = static_cast<int>(g[i]);
  u.t = static_cast<int>(t[i]);
  u.x = x.row(i);
  u.s = s.row(i);
  if (!std::isnan(y[i])) u.y = y[i];
  return u;
}

RawColumns load_csv_columns(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  const std::vector<std::string> header = split_line(line);
  const std::size_t width = header.size();

  std::map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < width; ++j) {
    if (col_of.count(header[j])) {
      throw DataError("load_csv: duplicate column '" + header[j] + "'");
    }
    col_of[header[j]] = j;
  }
  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col_of.find(name);
    if (it == col_of.end()) return std::nullopt;
    return it->second;
  };

  std::optional<std::size_t> g_col;
  if (!schema.implied_g) {
    g_col = find_col(schema.g);
    if (!g_col) throw DataError("load_csv: missing group column '" + schema.g + "'");
  }
  const auto t_col = find_col(schema.t);
  if (!t_col) throw DataError("load_csv: missing treatment column '" + schema.t + "'");
  const auto y_col = find_col(schema.y);  // may be absent for RCT-only files

  auto resolve_block = [&](const std::vector<std::string>& named, char prefix,
                           const char* what) {
    std::vector<std::size_t> cols;
    if (!named.empty()) {
      for (const auto& nm : named) {
        auto c = find_col(nm);
        if (!c) throw DataError(std::string("load_csv: missing ") + what +
                                " column '" + nm + "'");
        cols.push_back(*c);
      }
    } else {
      std::vector<std::pair<int, std::size_t>> found;
      for (std::size_t j = 0; j < width; ++j) {
        const int idx = indexed_name(header[j], prefix);
        if (idx > 0) found.emplace_back(idx, j);
      }
      std::sort(found.begin(), found.end());
      for (auto& [idx, j] : found) cols.push_back(j);
    }
    if (cols.empty()) {
      throw DataError(std::string("load_csv: no ") + what + " columns found");
    }
    return cols;
  };
  const auto s_block = resolve_block(schema.s_cols, 's', "surrogate");
  const auto x_block = resolve_block(schema.x_cols, 'x', "covariate");

  std::optional<std::size_t> e_col;
  if (schema.propensity_col) {
    e_col = find_col(*schema.propensity_col);
    if (!e_col) {
      throw DataError("load_csv: missing propensity column '" +
                      *schema.propensity_col + "'");
    }
  }

  std::vector<double> gs, ts, ys, es;
  std::vector<double> xs, ss;  // row-major staging
  std::size_t n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != width) {
      throw DataError("load_csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(width));
    }
    const double gv = g_col ? parse_cell(cells[*g_col], line_no, schema.g)
                            : static_cast<double>(*schema.implied_g);
    gs.push_back(gv);
    ts.push_back(parse_cell(cells[*t_col], line_no, schema.t));
    if (y_col && !cells[*y_col].empty()) {
      ys.push_back(parse_cell(cells[*y_col], line_no, schema.y));
    } else {
      ys.push_back(FusedDataset::missing);
    }
    for (auto c : s_block) ss.push_back(parse_cell(cells[c], line_no, header[c]));
    for (auto c : x_block) xs.push_back(parse_cell(cells[c], line_no, header[c]));
    if (e_col) es.push_back(parse_cell(cells[*e_col], line_no, header[*e_col]));
    ++n;
  }
  if (n == 0) throw DataError("load_csv: no data rows in " + path);

  const auto k = static_cast<Eigen::Index>(s_block.size());
  const auto p = static_cast<Eigen::Index>(x_block.size());
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(ni, p), s(ni, k);
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) s(i, j) = ss[i * k + j];
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = xs[i * p + j];
  }
  RawColumns out;
  out.x = std::move(x);
  out.s = std::move(s);
  out.t = Eigen::Map<Eigen::VectorXd>(ts.data(), ni);
  out.g = Eigen::Map<Eigen::VectorXd>(gs.data(), ni);
  out.y = Eigen::Map<Eigen::VectorXd>(ys.data(), ni);
  if (e_col) out.known_propensity = Eigen::Map<Eigen::VectorXd>(es.data(), ni);
  return out;
}

RawColumns concat(const RawColumns& a, const RawColumns& b) {
  if (a.x.cols() != b.x.cols() || a.s.cols() != b.s.cols()) {
    throw DataError("concat: covariate/surrogate column counts disagree");
  }
  if (a.known_propensity.has_value() != b.known_propensity.has_value()) {
    throw DataError("concat: propensity column present in only one file");
  }
  RawColumns out;
  const Eigen::Index n = a.t.size() + b.t.size();
  out.x.resize(n, a.x.cols());
  out.x << a.x, b.x;
  out.s.resize(n, a.s.cols());
  out.s << a.s, b.s;
  out.t.resize(n);
  out.t << a.t, b.t;
  out.g.resize(n);
  out.g << a.g, b.g;
  out.y.resize(n);
  out.y << a.y, b.y;
  if (a.known_propensity) {
    Eigen::VectorXd e(n);
    e << *a.known_propensity, *b.known_propensity;
    out.known_propensity = std::move(e);
  }
  return out;
}

FusedDataset from_columns(RawColumns columns,
                          std::optional<Family> family_override) {
  return FusedDataset::make(std::move(columns.x), std::move(columns.s),
                            std::move(columns.t), std::move(columns.g),
                            std::move(columns.y), family_override,
                            std::move(columns.known_propensity));
}

FusedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                      std::optional<Family> family_override) {
  auto data = from_columns(load_csv_columns(path, schema), family_override);
  if (schema.propensity_col) data.propensity_col_name = *schema.propensity_col;
  return data;
}

void write_csv(const FusedDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open " + path);
  std::string buf;
  buf += "g,t,y";
  for (Eigen::Index j = 0; j < data.s.cols(); ++j) {
    buf += ",s" + std::to_string(j + 1);
  }
  for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
    buf += ",x" + std::to_string(j + 1);
  }
  if (data.known_propensity) buf += "," + data.propensity_col_name;
  buf += "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    format_value(buf, data.g[i]);
    buf += ',';
    format_value(buf, data.t[i]);
    buf += ',';
    if (!std::isnan(data.y[i])) format_value(buf, data.y[i]);
    for (Eigen::Index j = 0; j < data.s.cols(); ++j) {
      buf += ',';
      format_value(buf, data.s(i, j));
    }
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
      buf += ',';
      format_value(buf, data.x(i, j));
    }
    if (data.known_propensity) {
      buf += ',';
      format_value(buf, (*data.known_propensity)[i]);
    }
    buf += '\n';
  }
  out << buf;
  if (!out) throw DataError("write_csv: write failed for " + path);
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  }
  return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  }
  return out;
}

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

OverlapReport overlap_diagnostics(const FusedDataset& data, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw UsageError("overlap_diagnostics: epsilon must lie in (0, 0.5)");
  }
  OverlapReport report;
  report.epsilon = epsilon;

  GlmSpec logit;
  logit.family = Family::logistic;

  // (i) pr(T=1|X, G=1) on the RCT sample.
  try {
    const Eigen::MatrixXd xr = select_rows(data.x, data.rct_rows);
    const Eigen::VectorXd tr = select_rows(data.t, data.rct_rows);
    const auto fit = fit_glm(logit, xr, tr);
    if (!fit.converged) throw FitError("overlap clause (i): IRLS did not converge");
    const Eigen::VectorXd p = predict_mean(fit, xr);
    report.rct_propensity.fitted = true;
    report.rct_propensity.min_fitted = p.minCoeff();
    report.rct_propensity.max_fitted = p.maxCoeff();
    report.rct_propensity.violated =
        p.minCoeff() < epsilon || p.maxCoeff() > 1.0 - epsilon;
  } catch (const Error& e) {
    report.rct_propensity.error = e.what();
  }

  // (ii) pr(T=1|X, S, G=0) on the observational sample.
  try {
    const Eigen::MatrixXd xso =
        hcat(select_rows(data.x, data.obs_rows), select_rows(data.s, data.obs_rows));
    const Eigen::VectorXd to = select_rows(data.t, data.obs_rows);
    const auto fit = fit_glm(logit, xso, to);
    if (!fit.converged) throw FitError("overlap clause (ii): IRLS did not converge");
    const Eigen::VectorXd p = predict_mean(fit, xso);
    report.obs_propensity.fitted = true;
    report.obs_propensity.min_fitted = p.minCoeff();
    report.obs_propensity.max_fitted = p.maxCoeff();
    report.obs_propensity.violated =
        p.minCoeff() < epsilon || p.maxCoeff() > 1.0 - epsilon;
  } catch (const Error& e) {
    report.obs_propensity.error = e.what();
  }

  // (iii) pr(G=0|X,S) fitted on the pooled sample, screened at RCT units;
  // only the lower bound matters.
  try {
    const Eigen::MatrixXd xs_all = hcat(data.x, data.s);
    const Eigen::VectorXd not_g = (1.0 - data.g.array()).matrix();
    const auto fit = fit_glm(logit, xs_all, not_g);
    if (!fit.converged) throw FitError("overlap clause (iii): IRLS did not converge");
    const Eigen::MatrixXd xs_rct = select_rows(xs_all, data.rct_rows);
    const Eigen::VectorXd p = predict_mean(fit, xs_rct);
    report.rct_in_obs.fitted = true;
    report.rct_in_obs.min_fitted = p.minCoeff();
    report.rct_in_obs.max_fitted = p.maxCoeff();
    report.rct_in_obs.violated = p.minCoeff() < epsilon;
  } catch (const Error& e) {
    report.rct_in_obs.error = e.what();
  }
  return report;
}

}  // namespace longfuse
