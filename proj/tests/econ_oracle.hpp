#pragma once

// Brute-force reference estimators: every fixed effect becomes explicit
// dummy columns, and the cluster sandwich is formed on the full design.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skillmap/econ.hpp"

namespace skillmap::oracle {

struct Fit {
  Eigen::VectorXd slopes;
  Eigen::VectorXd se;
  double r2 = 0.0;
};

struct Design {
  Eigen::MatrixXd slopes;       // n x p
  Eigen::MatrixXd full;         // n x (p + 1 + dummies)
  Eigen::VectorXd y;
  std::vector<int> cluster;     // dense codes
  std::size_t clusters = 0;
  std::size_t k = 0;            // small-sample K
};

inline std::vector<int> dense(const std::vector<std::string>& keys, std::size_t* levels) {
  std::map<std::string, int> code;
  std::vector<int> out;
  for (const auto& k : keys) out.push_back(code.emplace(k, static_cast<int>(code.size())).first->second);
  *levels = code.size();
  return out;
}

// True when no level of dim spans two clusters.
inline bool nested(const std::vector<int>& dim, const std::vector<int>& cl) {
  std::map<int, int> owner;
  for (std::size_t i = 0; i < dim.size(); ++i) {
    auto [it, fresh] = owner.emplace(dim[i], cl[i]);
    if (!fresh && it->second != cl[i]) return false;
  }
  return true;
}

inline Design design(const DataFrame& df, const std::vector<std::string>& slope_cols, const std::string& outcome,
                     const std::vector<std::string>& fe, const std::string& cluster) {
  Design d;
  const auto n = static_cast<Eigen::Index>(df.rows());
  d.y = Eigen::Map<const Eigen::VectorXd>(df.numeric(outcome).data(), n);
  d.slopes.resize(n, static_cast<Eigen::Index>(slope_cols.size()));
  for (std::size_t j = 0; j < slope_cols.size(); ++j) {
    d.slopes.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(df.numeric(slope_cols[j]).data(), n);
  }
  d.cluster = dense(df.key(cluster), &d.clusters);
  std::vector<Eigen::VectorXd> dummies;
  d.k = slope_cols.size();
  for (const auto& dim : fe) {
    std::size_t levels = 0;
    const auto codes = dense(df.key(dim), &levels);
    if (!nested(codes, d.cluster)) d.k += levels - 1;
    for (std::size_t l = 1; l < levels; ++l) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) col(i) = codes[static_cast<std::size_t>(i)] == static_cast<int>(l);
      dummies.push_back(col);
    }
  }
  d.full.resize(n, d.slopes.cols() + 1 + static_cast<Eigen::Index>(dummies.size()));
  d.full.leftCols(d.slopes.cols()) = d.slopes;
  d.full.col(d.slopes.cols()).setOnes();
  for (std::size_t j = 0; j < dummies.size(); ++j) d.full.col(d.slopes.cols() + 1 + static_cast<Eigen::Index>(j)) = dummies[j];
  return d;
}

// Sandwich on the full dummy design; returns the slope block.
inline Eigen::MatrixXd sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& e, const Design& d) {
  const Eigen::MatrixXd bread = (X.transpose() * X).completeOrthogonalDecomposition().pseudoInverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  std::vector<Eigen::VectorXd> score(d.clusters, Eigen::VectorXd::Zero(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) score[static_cast<std::size_t>(d.cluster[static_cast<std::size_t>(i)])] += X.row(i).transpose() * e(i);
  for (const auto& s : score) meat += s * s.transpose();
  const double g = static_cast<double>(d.clusters);
  const double n = static_cast<double>(X.rows());
  const double factor = (g / (g - 1.0)) * ((n - 1.0) / (n - static_cast<double>(d.k)));
  const Eigen::MatrixXd v = factor * bread * meat * bread;
  return v.topLeftCorner(d.slopes.cols(), d.slopes.cols());
}

inline Fit ols(const DataFrame& df, const std::vector<std::string>& slope_cols, const std::string& outcome,
               const std::vector<std::string>& fe, const std::string& cluster) {
  const auto d = design(df, slope_cols, outcome, fe, cluster);
  const Eigen::VectorXd b = d.full.colPivHouseholderQr().solve(d.y);
  const Eigen::VectorXd e = d.y - d.full * b;
  Fit f;
  f.slopes = b.head(d.slopes.cols());
  f.se = sandwich(d.full, e, d).diagonal().cwiseSqrt();
  const double tss = (d.y.array() - d.y.mean()).square().sum();
  f.r2 = tss > 0 ? 1.0 - e.squaredNorm() / tss : 0.0;
  return f;
}

// Just-identified 2SLS: the instrument replaces the first slope column.
inline Fit tsls(const DataFrame& df, const std::vector<std::string>& slope_cols, const std::string& instrument,
                const std::string& outcome, const std::vector<std::string>& fe, const std::string& cluster) {
  const auto d = design(df, slope_cols, outcome, fe, cluster);
  Eigen::MatrixXd Z = d.full;
  Z.col(0) = Eigen::Map<const Eigen::VectorXd>(df.numeric(instrument).data(), Z.rows());
  const Eigen::MatrixXd Pz = Z * (Z.transpose() * Z).completeOrthogonalDecomposition().pseudoInverse() * Z.transpose();
  const Eigen::MatrixXd Xhat = Pz * d.full;
  const Eigen::VectorXd b = Xhat.colPivHouseholderQr().solve(d.y);
  const Eigen::VectorXd e = d.y - d.full * b;
  Fit f;
  f.slopes = b.head(d.slopes.cols());
  f.se = sandwich(Xhat, e, d).diagonal().cwiseSqrt();
  return f;
}

}  // namespace skillmap::oracle
