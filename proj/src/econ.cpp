#include "skillmap/econ.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "skillmap/util.hpp"

namespace skillmap {

void DataFrame::check_size(const std::string& name, std::size_t n) {
  if (!sized_) {
    rows_ = n;
    sized_ = true;
  } else if (n != rows_) {
    throw std::invalid_argument("column '" + name + "' has " + std::to_string(n) + " rows, expected " +
                                std::to_string(rows_));
  }
}

void DataFrame::add_numeric(const std::string& name, std::vector<double> values) {
  check_size(name, values.size());
  numeric_[name] = std::move(values);
}

void DataFrame::add_key(const std::string& name, std::vector<std::string> values) {
  check_size(name, values.size());
  keys_[name] = std::move(values);
}

bool DataFrame::has_key(const std::string& name) const {
  for (const auto& part : split(name, '*')) {
    if (!keys_.count(part) && !numeric_.count(part)) return false;
  }
  return true;
}

const std::vector<double>& DataFrame::numeric(const std::string& name) const {
  auto it = numeric_.find(name);
  if (it == numeric_.end()) throw std::invalid_argument("no numeric column '" + name + "'");
  return it->second;
}

std::vector<std::string> DataFrame::key(const std::string& name) const {
  std::vector<std::string> out(rows_);
  bool first = true;
  for (const auto& part : split(name, '*')) {
    std::vector<std::string> values;
    if (auto it = keys_.find(part); it != keys_.end()) {
      values = it->second;
    } else if (auto nt = numeric_.find(part); nt != numeric_.end()) {
      for (double v : nt->second) values.push_back(format_double(v));
    } else {
      throw std::invalid_argument("no key column '" + part + "'");
    }
    for (std::size_t i = 0; i < rows_; ++i) {
      if (!first) out[i] += '|';
      out[i] += values[i];
    }
    first = false;
  }
  return out;
}

DataFrame DataFrame::subset(const std::vector<std::size_t>& rows) const {
  DataFrame out;
  out.rows_ = rows.size();
  out.sized_ = true;
  for (const auto& [name, col] : numeric_) {
    auto& dst = out.numeric_[name];
    for (auto r : rows) dst.push_back(col.at(r));
  }
  for (const auto& [name, col] : keys_) {
    auto& dst = out.keys_[name];
    for (auto r : rows) dst.push_back(col.at(r));
  }
  return out;
}

void RegressionSpec::validate() const {
  if (outcome.empty()) throw std::invalid_argument("spec has no outcome");
  if (regressor.empty()) throw std::invalid_argument("spec has no regressor");
  if (fixed_effects.empty()) throw std::invalid_argument("spec needs at least one fixed effect");
  if (cluster.empty()) throw std::invalid_argument("spec has no cluster dimension");
}

std::string RegressionSpec::hash() const {
  std::ostringstream s;
  s << name << '\x1f' << outcome << '\x1f' << regressor << '\x1f';
  for (const auto& c : controls) s << c << ',';
  s << '\x1f';
  for (const auto& f : fixed_effects) s << f << ',';
  s << '\x1f' << cluster << '\x1f' << (transform == Transform::log1p ? "log1p" : "level") << '\x1f'
    << instrument;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s.str())));
  return buf;
}

double EstimateResult::coef(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return coefficients[i];
  }
  throw std::out_of_range("no coefficient '" + name + "'");
}

double EstimateResult::stderr_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return se[i];
  }
  throw std::out_of_range("no coefficient '" + name + "'");
}

std::string to_record(const EstimateResult& r) {
  std::ostringstream out;
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  out << "spec=" << r.spec_name << '\n' << "estimator=" << r.estimator << '\n';
  if (!r.names.empty()) {
    out << "regressor=" << r.names[0] << '\n'
        << "coefficient=" << format_double(r.coefficients[0]) << '\n'
        << "se=" << format_double(r.se[0]) << '\n'
        << "t=" << format_double(r.se[0] > 0 ? r.coefficients[0] / r.se[0] : 0.0) << '\n';
  }
  for (std::size_t i = 1; i < r.names.size(); ++i) {
    out << "coef." << r.names[i] << '=' << format_double(r.coefficients[i]) << '\n'
        << "se." << r.names[i] << '=' << format_double(r.se[i]) << '\n';
  }
  out << "n=" << r.n << '\n'
      << "clusters=" << r.clusters << '\n'
      << "r2=" << format_double(r.r2) << '\n'
      << "adj_r2=" << format_double(r.adj_r2) << '\n'
      << "first_stage_f=" << (r.first_stage_f ? format_double(*r.first_stage_f) : "") << '\n';
  if (r.first_stage_coef) {
    out << "first_stage_coef=" << format_double(*r.first_stage_coef) << '\n'
        << "first_stage_se=" << format_double(*r.first_stage_se) << '\n'
        << "weak_instrument=" << (r.weak_instrument ? 1 : 0) << '\n';
  }
  out << "fe_dims=" << join(r.fe_dims) << '\n'
      << "cluster_dim=" << r.cluster_dim << '\n'
      << "demean_iterations=" << r.demean_iterations << '\n'
      << "spec_hash=" << r.spec_hash << '\n';
  for (const auto& [k, v] : r.notes) out << k << '=' << v << '\n';
  return out.str();
}

CollinearityError::CollinearityError(std::vector<std::string> columns)
    : std::runtime_error([&] {
        std::string msg = "collinear regressors after demeaning:";
        for (const auto& c : columns) msg += " " + c;
        return msg;
      }()),
      columns_(std::move(columns)) {}

ConvergenceError::ConvergenceError(int iterations, double residual)
    : std::runtime_error("demeaning did not converge after " + std::to_string(iterations) +
                         " sweeps; largest group mean " + format_double(residual)),
      residual_(residual) {}

GroupCodes encode_groups(const std::vector<std::string>& keys) {
  GroupCodes g;
  std::unordered_map<std::string, std::size_t> seen;
  g.code.reserve(keys.size());
  for (const auto& k : keys) {
    auto [it, fresh] = seen.emplace(k, seen.size());
    g.code.push_back(it->second);
  }
  g.levels = seen.size();
  return g;
}

namespace {

// Subtracts group means from each column; returns the largest mean removed.
double sweep(Eigen::MatrixXd& cols, const GroupCodes& g, std::vector<double>& counts, Eigen::MatrixXd& sums) {
  const auto n = cols.rows();
  sums.setZero(static_cast<Eigen::Index>(g.levels), cols.cols());
  counts.assign(g.levels, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(g.code[static_cast<std::size_t>(i)]);
    sums.row(c) += cols.row(i);
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (Eigen::Index c = 0; c < sums.rows(); ++c) sums.row(c) /= counts[static_cast<std::size_t>(c)];
  for (Eigen::Index i = 0; i < n; ++i) {
    cols.row(i) -= sums.row(static_cast<Eigen::Index>(g.code[static_cast<std::size_t>(i)]));
  }
  return sums.size() ? sums.cwiseAbs().maxCoeff() : 0.0;
}

double max_group_mean(const Eigen::MatrixXd& cols, const GroupCodes& g, std::vector<double>& counts,
                      Eigen::MatrixXd& sums) {
  sums.setZero(static_cast<Eigen::Index>(g.levels), cols.cols());
  counts.assign(g.levels, 0.0);
  for (Eigen::Index i = 0; i < cols.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>(g.code[static_cast<std::size_t>(i)]);
    sums.row(c) += cols.row(i);
    counts[static_cast<std::size_t>(c)] += 1.0;
  }
  for (Eigen::Index c = 0; c < sums.rows(); ++c) sums.row(c) /= counts[static_cast<std::size_t>(c)];
  return sums.size() ? sums.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace

int demean(Eigen::MatrixXd& columns, const std::vector<GroupCodes>& groups, const DemeanConfig& config) {
  if (groups.empty() || columns.size() == 0) return 0;
  for (const auto& g : groups) {
    if (g.code.size() != static_cast<std::size_t>(columns.rows())) {
      throw std::invalid_argument("group codes do not match the data length");
    }
  }
  std::vector<double> counts;
  Eigen::MatrixXd sums;
  double residual = 0.0;
  for (int it = 1; it <= config.max_iterations; ++it) {
    for (const auto& g : groups) sweep(columns, g, counts, sums);
    if (groups.size() == 1) return it;
    residual = 0.0;
    for (const auto& g : groups) residual = std::max(residual, max_group_mean(columns, g, counts, sums));
    if (residual < config.tolerance) return it;
  }
  throw ConvergenceError(config.max_iterations, residual);
}

bool nested_in(const GroupCodes& dim, const GroupCodes& clusters) {
  std::vector<std::size_t> owner(dim.levels, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < dim.code.size(); ++i) {
    auto& o = owner[dim.code[i]];
    if (o == static_cast<std::size_t>(-1)) {
      o = clusters.code[i];
    } else if (o != clusters.code[i]) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd cluster_covariance(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                   const GroupCodes& clusters, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  const std::size_t g = clusters.levels;
  if (g < 2) throw std::invalid_argument("clustered covariance needs at least 2 clusters");
  if (n <= k) throw std::invalid_argument("not enough observations for the parameter count");
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g), X.cols());
  for (std::size_t i = 0; i < n; ++i) {
    scores.row(static_cast<Eigen::Index>(clusters.code[i])) += X.row(static_cast<Eigen::Index>(i)) * residuals(static_cast<Eigen::Index>(i));
  }
  const Eigen::MatrixXd meat = scores.transpose() * scores;
  const Eigen::MatrixXd bread = (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  const double gd = static_cast<double>(g), nd = static_cast<double>(n), kd = static_cast<double>(k);
  const double factor = (gd / (gd - 1.0)) * ((nd - 1.0) / (nd - kd));
  return factor * bread * meat * bread;
}

namespace {

struct Prepared {
  std::vector<std::size_t> rows;  // retained row indices
  Eigen::MatrixXd cols;           // outcome, then regressor columns, then extra columns
  std::vector<GroupCodes> fe;
  GroupCodes cluster;
  int iterations = 0;
  double tss = 0.0;
  std::size_t fe_params = 0;       // for adjusted R^2
  std::size_t fe_unnested = 0;     // for the small-sample factor
};

// Drops rows with a non-finite value in any used column, transforms the
// outcome and demeans everything.
Prepared prepare(const DataFrame& data, const RegressionSpec& spec, const std::vector<std::string>& numeric,
                 const DemeanConfig& config) {
  spec.validate();
  for (const auto& c : numeric) {
    if (!data.has_numeric(c)) throw std::invalid_argument("data has no column '" + c + "'");
  }
  for (const auto& f : spec.fixed_effects) {
    if (!data.has_key(f)) throw std::invalid_argument("data has no fixed-effect column '" + f + "'");
  }
  if (!data.has_key(spec.cluster)) throw std::invalid_argument("data has no cluster column '" + spec.cluster + "'");

  Prepared p;
  std::vector<const std::vector<double>*> src;
  for (const auto& c : numeric) src.push_back(&data.numeric(c));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    bool ok = true;
    for (auto* col : src) ok = ok && std::isfinite((*col)[i]);
    if (ok && spec.transform == Transform::log1p && !((*src[0])[i] > -1.0)) ok = false;
    if (ok) p.rows.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(p.rows.size());
  p.cols.resize(n, static_cast<Eigen::Index>(numeric.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < numeric.size(); ++c) {
      double v = (*src[c])[p.rows[static_cast<std::size_t>(i)]];
      if (c == 0 && spec.transform == Transform::log1p) v = std::log1p(v);
      p.cols(i, static_cast<Eigen::Index>(c)) = v;
    }
  }
  const auto subset_keys = [&](const std::string& name) {
    auto all = data.key(name);
    std::vector<std::string> out;
    out.reserve(p.rows.size());
    for (auto r : p.rows) out.push_back(all[r]);
    return out;
  };
  p.cluster = encode_groups(subset_keys(spec.cluster));
  std::size_t level_sum = 0;
  for (const auto& f : spec.fixed_effects) {
    p.fe.push_back(encode_groups(subset_keys(f)));
    level_sum += p.fe.back().levels;
    if (!nested_in(p.fe.back(), p.cluster)) p.fe_unnested += p.fe.back().levels - 1;
  }
  p.fe_params = level_sum - (p.fe.size() - 1);

  if (n > 0) {
    const double mean = p.cols.col(0).mean();
    p.tss = (p.cols.col(0).array() - mean).square().sum();
  }
  p.iterations = demean(p.cols, p.fe, config);
  return p;
}

// OLS on demeaned columns with collinearity detection.
Eigen::VectorXd solve_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& raw,
                         const std::vector<std::string>& names) {
  std::vector<std::string> bad;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double before = raw.col(j).squaredNorm();
    if (X.col(j).squaredNorm() <= 1e-20 * std::max(before, 1e-300)) bad.push_back(names[static_cast<std::size_t>(j)]);
  }
  if (!bad.empty()) throw CollinearityError(bad);
  // Scale columns so the rank threshold is unit-free.
  Eigen::VectorXd scale = X.colwise().norm().transpose();
  Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < Xs.cols()) {
    for (Eigen::Index j = qr.rank(); j < Xs.cols(); ++j) {
      bad.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()(j))]);
    }
    throw CollinearityError(bad);
  }
  return qr.solve(y).cwiseQuotient(scale);
}

void fill_fit(EstimateResult& r, const Prepared& p, const Eigen::VectorXd& residuals, std::size_t slopes) {
  r.n = p.rows.size();
  r.clusters = p.cluster.levels;
  r.dof_k = slopes + p.fe_unnested;
  r.demean_iterations = p.iterations;
  if (p.tss > 0.0) {
    r.r2 = 1.0 - residuals.squaredNorm() / p.tss;
    const double nd = static_cast<double>(r.n);
    const double kfull = static_cast<double>(slopes + p.fe_params);
    r.adj_r2 = nd > kfull ? 1.0 - (1.0 - r.r2) * (nd - 1.0) / (nd - kfull) : 0.0;
  } else {
    r.r2 = 0.0;
    r.adj_r2 = 0.0;
  }
}

EstimateResult base_result(const RegressionSpec& spec, const char* estimator) {
  EstimateResult r;
  r.spec_name = spec.name;
  r.estimator = estimator;
  r.names.push_back(spec.regressor);
  for (const auto& c : spec.controls) r.names.push_back(c);
  r.fe_dims = spec.fixed_effects;
  r.cluster_dim = spec.cluster;
  r.spec_hash = spec.hash();
  return r;
}

std::vector<double> diag_sqrt(const Eigen::MatrixXd& v) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < v.rows(); ++i) out.push_back(std::sqrt(std::max(0.0, v(i, i))));
  return out;
}

Eigen::MatrixXd raw_columns(const DataFrame& data, const std::vector<std::size_t>& rows,
                            const std::vector<std::string>& names) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto& col = data.numeric(names[c]);
    for (std::size_t i = 0; i < rows.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = col[rows[i]];
  }
  return m;
}

}  // namespace

EstimateResult ols_fe(const DataFrame& data, const RegressionSpec& spec, const DemeanConfig& config) {
  std::vector<std::string> cols{spec.outcome, spec.regressor};
  cols.insert(cols.end(), spec.controls.begin(), spec.controls.end());
  Prepared p = prepare(data, spec, cols, config);
  EstimateResult r = base_result(spec, "ols");
  const auto k = static_cast<Eigen::Index>(cols.size() - 1);
  if (p.rows.size() <= static_cast<std::size_t>(k)) throw std::invalid_argument("too few observations");

  const Eigen::MatrixXd X = p.cols.rightCols(k);
  const Eigen::VectorXd y = p.cols.col(0);
  const Eigen::VectorXd beta = solve_ls(X, y, raw_columns(data, p.rows, r.names), r.names);
  const Eigen::VectorXd e = y - X * beta;
  fill_fit(r, p, e, static_cast<std::size_t>(k));
  r.coefficients.assign(beta.data(), beta.data() + beta.size());
  r.se = diag_sqrt(cluster_covariance(X, e, p.cluster, r.dof_k));
  return r;
}

EstimateResult tsls(const DataFrame& data, const RegressionSpec& spec, const DemeanConfig& config) {
  std::vector<std::string> cols{spec.outcome, spec.regressor, spec.instrument};
  cols.insert(cols.end(), spec.controls.begin(), spec.controls.end());
  const std::size_t dropped_missing = [&] {
    if (!data.has_numeric(spec.instrument)) return std::size_t{0};
    const auto& z = data.numeric(spec.instrument);
    return static_cast<std::size_t>(std::count_if(z.begin(), z.end(), [](double v) { return !std::isfinite(v); }));
  }();
  Prepared p = prepare(data, spec, cols, config);
  EstimateResult r = base_result(spec, "tsls");
  const auto w = static_cast<Eigen::Index>(spec.controls.size());
  const auto k = w + 1;
  if (p.rows.size() <= static_cast<std::size_t>(k)) throw std::invalid_argument("too few observations");

  const Eigen::VectorXd y = p.cols.col(0);
  const Eigen::VectorXd d = p.cols.col(1);
  const Eigen::MatrixXd W = p.cols.rightCols(w);

  // First stage: regressor on instrument and controls.
  Eigen::MatrixXd Z1(y.size(), k);
  Z1.col(0) = p.cols.col(2);
  Z1.rightCols(w) = W;
  std::vector<std::string> first_names{spec.instrument};
  first_names.insert(first_names.end(), spec.controls.begin(), spec.controls.end());
  std::vector<std::string> raw_first = first_names;
  const Eigen::VectorXd pi = solve_ls(Z1, d, raw_columns(data, p.rows, raw_first), first_names);
  const Eigen::VectorXd v = d - Z1 * pi;
  const std::size_t dof = static_cast<std::size_t>(k) + p.fe_unnested;
  const Eigen::MatrixXd v1 = cluster_covariance(Z1, v, p.cluster, dof);
  r.first_stage_coef = pi(0);
  r.first_stage_se = std::sqrt(std::max(0.0, v1(0, 0)));
  r.first_stage_f = v1(0, 0) > 0.0 ? pi(0) * pi(0) / v1(0, 0) : 0.0;
  r.weak_instrument = *r.first_stage_f < 1e-6;
  if (r.weak_instrument) spdlog::warn("{}: first-stage F {} indicates no instrument relevance", spec.name, *r.first_stage_f);

  // Second stage on fitted values; residuals use the original regressor.
  Eigen::MatrixXd Xhat(y.size(), k), X(y.size(), k);
  Xhat.col(0) = Z1 * pi;
  Xhat.rightCols(w) = W;
  X.col(0) = d;
  X.rightCols(w) = W;
  const Eigen::VectorXd beta = solve_ls(Xhat, y, raw_columns(data, p.rows, r.names), r.names);
  const Eigen::VectorXd e = y - X * beta;
  fill_fit(r, p, e, static_cast<std::size_t>(k));
  r.coefficients.assign(beta.data(), beta.data() + beta.size());
  r.se = diag_sqrt(cluster_covariance(Xhat, e, p.cluster, r.dof_k));
  r.notes.emplace_back("iv_dropped_missing_instrument", std::to_string(dropped_missing));
  return r;
}

EstimateResult first_stage_firm_year(const DataFrame& firm_years, const RegressionSpec& spec,
                                     const DemeanConfig& config) {
  RegressionSpec fs;
  fs.name = spec.name + ".first_stage_firm_year";
  fs.outcome = spec.regressor;
  fs.regressor = spec.instrument;
  fs.controls = spec.controls;
  fs.fixed_effects = {"firm_id", "year"};
  fs.cluster = spec.cluster;
  fs.transform = Transform::level;
  EstimateResult r = ols_fe(firm_years, fs, config);
  r.estimator = "first_stage";
  const double t = r.se[0] > 0 ? r.coefficients[0] / r.se[0] : 0.0;
  r.first_stage_f = t * t;
  r.first_stage_coef = r.coefficients[0];
  r.first_stage_se = r.se[0];
  r.weak_instrument = *r.first_stage_f < 1e-6;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<ExaminerRecord> load_examiner_records(const std::filesystem::path& path) {
  Table t = read_table(path);
  const auto app = t.column("application_id"), ex = t.column("examiner_id"), firm = t.column("firm_id"),
             year = t.column("year"), ai = t.column("is_ai"), granted = t.column("granted");
  std::vector<ExaminerRecord> out;
  std::set<std::string> ids;
  for (const auto& row : t.rows) {
    ExaminerRecord r{row[app], row[ex], row[firm], std::stoi(row[year]), row[ai] == "1", row[granted] == "1"};
    if ((row[ai] != "0" && row[ai] != "1") || (row[granted] != "0" && row[granted] != "1")) {
      throw std::runtime_error(path.string() + ": is_ai and granted must be 0 or 1");
    }
    if (!ids.insert(r.application_id).second) {
      throw std::runtime_error(path.string() + ": duplicate application_id '" + r.application_id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_examiner_records(const std::filesystem::path& path, const std::vector<ExaminerRecord>& records) {
  Table t;
  t.header = {"application_id", "examiner_id", "firm_id", "year", "is_ai", "granted"};
  for (const auto& r : records) {
    t.rows.push_back({r.application_id, r.examiner_id, r.firm_id, std::to_string(r.year), r.is_ai ? "1" : "0",
                      r.granted ? "1" : "0"});
  }
  write_table(path, t);
}

std::map<std::string, double> examiner_leniency(const std::vector<ExaminerRecord>& records, int first_year,
                                                int last_year) {
  if (first_year > last_year) throw std::invalid_argument("baseline window is empty");
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // granted, total
  for (const auto& r : records) {
    if (r.is_ai || r.year < first_year || r.year > last_year) continue;
    auto& [g, n] = tally[r.examiner_id];
    g += r.granted ? 1 : 0;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [e, gn] : tally) out[e] = static_cast<double>(gn.first) / static_cast<double>(gn.second);
  return out;
}

Instrument build_instrument(const std::vector<ExaminerRecord>& records, const std::map<std::string, double>& leniency) {
  Instrument out;
  std::map<FirmYear, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (!r.is_ai) continue;
    auto it = leniency.find(r.examiner_id);
    if (it == leniency.end()) {
      ++out.applications_excluded;
      spdlog::debug("application {} has no leniency score for examiner {}", r.application_id, r.examiner_id);
      continue;
    }
    auto& [sum, n] = acc[{r.firm_id, r.year}];
    sum += it->second;
    ++n;
    ++out.applications_used;
  }
  for (const auto& [fy, sn] : acc) out.values[fy] = sn.first / static_cast<double>(sn.second);
  if (out.applications_excluded > 0) {
    spdlog::info("{} AI applications excluded: examiner without baseline record", out.applications_excluded);
  }
  return out;
}

// ---------------------------------------------------------------------------

SimulatedPanel simulate_dgp(const DgpConfig& c) {
  if (c.firms < 2 || c.occupations < 1 || c.years < 1 || c.examiners < 1) {
    throw std::invalid_argument("DGP needs at least 2 firms, 1 occupation, 1 year and 1 examiner");
  }
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](double sd) { return sd > 0.0 ? sd * normal(rng) : 0.0; };

  SimulatedPanel out;
  out.truth = {c.beta, c.first_stage, c.endogeneity, c.control_effect};

  const auto firm_name = [](std::size_t f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "F%04zu", f);
    return std::string(buf);
  };
  std::vector<double> grant_rate(c.examiners);
  std::vector<std::string> examiner(c.examiners);
  std::size_t app = 0;
  const auto app_name = [&] {
    char buf[24];
    std::snprintf(buf, sizeof buf, "A%07zu", app++);
    return std::string(buf);
  };
  for (std::size_t e = 0; e < c.examiners; ++e) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "E%03zu", e);
    examiner[e] = buf;
    grant_rate[e] = 0.1 + 0.85 * unit(rng);
    const int span = c.baseline_last - c.baseline_first + 1;
    for (std::size_t k = 0; k < c.baseline_records; ++k) {
      out.records.push_back({app_name(), examiner[e], firm_name(rng() % c.firms),
                             c.baseline_first + static_cast<int>(rng() % static_cast<std::uint64_t>(span)),
                             false, unit(rng) < grant_rate[e]});
    }
  }
  // One or two AI applications per firm-year, examiners drawn at random.
  for (std::size_t f = 0; f < c.firms; ++f) {
    for (std::size_t t = 0; t < c.years; ++t) {
      const std::size_t apps = 1 + rng() % 2;
      for (std::size_t a = 0; a < apps; ++a) {
        const std::size_t e = rng() % c.examiners;
        out.records.push_back({app_name(), examiner[e], firm_name(f), c.first_year + static_cast<int>(t), true,
                               unit(rng) < grant_rate[e]});
      }
    }
  }
  const auto leniency = examiner_leniency(out.records, c.baseline_first, c.baseline_last);
  const auto instrument = build_instrument(out.records, leniency);

  std::vector<double> occ_effect(c.occupations), year_effect(c.years);
  for (auto& v : occ_effect) v = draw(c.occ_sd);
  for (auto& v : year_effect) v = draw(c.year_sd);

  std::vector<std::string> p_firm, p_occ, p_year, fy_firm, fy_year;
  std::vector<double> p_y, p_stock, p_z, p_x1, fy_stock, fy_z, fy_x1;
  for (std::size_t f = 0; f < c.firms; ++f) {
    const double firm_level = 300.0 + draw(c.firm_stock_sd);
    const double firm_effect = draw(c.firm_sd);
    for (std::size_t t = 0; t < c.years; ++t) {
      const int year = c.first_year + static_cast<int>(t);
      auto zt = instrument.values.find({firm_name(f), year});
      const double z = zt == instrument.values.end() ? std::nan("") : zt->second;
      const double u = normal(rng);
      const double x1 = normal(rng);
      const double stock = firm_level + c.first_stage * (std::isfinite(z) ? z : 0.0) +
                           c.endogeneity * c.stock_loading * u + draw(c.stock_noise_sd);
      fy_firm.push_back(firm_name(f));
      fy_year.push_back(std::to_string(year));
      fy_stock.push_back(stock);
      fy_z.push_back(z);
      fy_x1.push_back(x1);
      for (std::size_t o = 0; o < c.occupations; ++o) {
        char occ[32];
        std::snprintf(occ, sizeof occ, "O%02zu", o);
        const double y = c.outcome_mean + c.beta * stock + firm_effect + occ_effect[o] + year_effect[t] +
                         c.control_effect * x1 + c.endogeneity * c.outcome_loading * u + draw(c.noise_sd);
        p_firm.push_back(firm_name(f));
        p_occ.push_back(occ);
        p_year.push_back(std::to_string(year));
        p_y.push_back(y);
        p_stock.push_back(stock);
        p_z.push_back(z);
        p_x1.push_back(x1);
      }
    }
  }
  out.panel.add_key("firm_id", std::move(p_firm));
  out.panel.add_key("occ_id", std::move(p_occ));
  out.panel.add_key("year", std::move(p_year));
  out.panel.add_numeric("y", std::move(p_y));
  out.panel.add_numeric("ai_stock", std::move(p_stock));
  out.panel.add_numeric("z", std::move(p_z));
  out.panel.add_numeric("x1", std::move(p_x1));
  out.firm_years.add_key("firm_id", std::move(fy_firm));
  out.firm_years.add_key("year", std::move(fy_year));
  out.firm_years.add_numeric("ai_stock", std::move(fy_stock));
  out.firm_years.add_numeric("z", std::move(fy_z));
  out.firm_years.add_numeric("x1", std::move(fy_x1));
  return out;
}

}  // namespace skillmap
