#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace skillmap {

// Column store for regression inputs. Key columns (firm, occupation, year as
// text) define fixed effects and clusters.
class DataFrame {
 public:
  std::size_t rows() const { return rows_; }
  void add_numeric(const std::string& name, std::vector<double> values);
  void add_key(const std::string& name, std::vector<std::string> values);
  bool has_numeric(const std::string& name) const { return numeric_.count(name) > 0; }
  bool has_key(const std::string& name) const;
  const std::vector<double>& numeric(const std::string& name) const;
  // "a*b" joins the key columns a and b into one composite key. A numeric
  // column used as a key is formatted as text.
  std::vector<std::string> key(const std::string& name) const;
  DataFrame subset(const std::vector<std::size_t>& rows) const;

 private:
  void check_size(const std::string& name, std::size_t n);
  std::size_t rows_ = 0;
  bool sized_ = false;
  std::map<std::string, std::vector<double>> numeric_;
  std::map<std::string, std::vector<std::string>> keys_;
};

enum class Transform { level, log1p };

struct RegressionSpec {
  std::string name;
  std::string outcome;
  std::string regressor = "ai_stock";
  std::vector<std::string> controls;
  std::vector<std::string> fixed_effects = {"firm_id", "occ_id", "year"};
  std::string cluster = "firm_id";
  Transform transform = Transform::log1p;
  // Used by tsls only.
  std::string instrument = "z";

  void validate() const;
  // Stable digest of every field, for result records.
  std::string hash() const;
};

struct EstimateResult {
  std::string spec_name;
  std::string estimator;  // "ols" or "tsls"
  std::vector<std::string> names;  // regressor first, then controls
  std::vector<double> coefficients;
  std::vector<double> se;
  std::size_t n = 0;
  std::size_t clusters = 0;
  std::size_t dof_k = 0;  // K in the small-sample factor
  double r2 = 0.0;
  double adj_r2 = 0.0;
  int demean_iterations = 0;
  std::vector<std::string> fe_dims;
  std::string cluster_dim;
  std::string spec_hash;
  // 2SLS only.
  std::optional<double> first_stage_f;
  std::optional<double> first_stage_coef;
  std::optional<double> first_stage_se;
  bool weak_instrument = false;
  // Additional named diagnostics, written verbatim to the record.
  std::vector<std::pair<std::string, std::string>> notes;

  double coef(const std::string& name) const;
  double stderr_of(const std::string& name) const;
};

std::string to_record(const EstimateResult& result);

class CollinearityError : public std::runtime_error {
 public:
  explicit CollinearityError(std::vector<std::string> columns);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(int iterations, double residual);
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Dense integer codes for one fixed-effect dimension.
struct GroupCodes {
  std::vector<std::size_t> code;
  std::size_t levels = 0;
};
GroupCodes encode_groups(const std::vector<std::string>& keys);

struct DemeanConfig {
  double tolerance = 1e-8;
  int max_iterations = 500;
};

// Sweeps group means out of every column in turn until the largest
// remaining within-group mean falls below tolerance. Returns the sweeps used.
int demean(Eigen::MatrixXd& columns, const std::vector<GroupCodes>& groups,
           const DemeanConfig& config = {});

// CR1 cluster-robust covariance: (G/(G-1)) ((N-1)/(N-K)) A^-1 M A^-1, with
// A = X'X and M the sum over clusters of X_g' e_g e_g' X_g.
Eigen::MatrixXd cluster_covariance(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                   const GroupCodes& clusters, std::size_t k);

// True when each group of dim lies inside a single cluster.
bool nested_in(const GroupCodes& dim, const GroupCodes& clusters);

EstimateResult ols_fe(const DataFrame& data, const RegressionSpec& spec, const DemeanConfig& config = {});
EstimateResult tsls(const DataFrame& data, const RegressionSpec& spec, const DemeanConfig& config = {});

// First stage on firm-year rows only (one row per firm-year, firm and year
// effects), for comparison with the merged-panel first stage.
EstimateResult first_stage_firm_year(const DataFrame& firm_years, const RegressionSpec& spec,
                                     const DemeanConfig& config = {});

struct ExaminerRecord {
  std::string application_id;
  std::string examiner_id;
  std::string firm_id;
  int year = 0;
  bool is_ai = false;
  bool granted = false;
};

std::vector<ExaminerRecord> load_examiner_records(const std::filesystem::path& path);
void write_examiner_records(const std::filesystem::path& path, const std::vector<ExaminerRecord>& records);

// Z_e: non-AI grant rate inside [first_year, last_year].
std::map<std::string, double> examiner_leniency(const std::vector<ExaminerRecord>& records,
                                                int first_year, int last_year);

using FirmYear = std::pair<std::string, int>;

struct Instrument {
  std::map<FirmYear, double> values;  // Z_{f,t}
  std::size_t applications_used = 0;
  std::size_t applications_excluded = 0;  // examiner without a leniency score
};

// Mean examiner leniency over each firm-year's AI applications. Firm-years
// without an AI application get no value.
Instrument build_instrument(const std::vector<ExaminerRecord>& records,
                            const std::map<std::string, double>& leniency);

struct DgpConfig {
  std::size_t firms = 400;
  std::size_t occupations = 5;
  std::size_t years = 6;
  int first_year = 2015;
  double beta = 0.0002;
  double first_stage = 45.8;   // d ai_stock / d Z
  double firm_stock_sd = 150.0;
  double stock_noise_sd = 10.0;
  double firm_sd = 0.3;
  double occ_sd = 0.2;
  double year_sd = 0.1;
  double noise_sd = 0.05;
  // Confounder loadings: u shifts ai_stock by endogeneity * stock_loading
  // and the outcome by endogeneity * outcome_loading.
  double endogeneity = 1.0;
  double stock_loading = 30.0;
  double outcome_loading = 0.02;
  std::size_t examiners = 80;
  std::size_t baseline_records = 40;  // non-AI applications per examiner
  int baseline_first = 2010;
  int baseline_last = 2014;
  double outcome_mean = 2.5;
  double control_effect = 0.1;  // coefficient on x1
  std::uint64_t seed = 99;
};

struct DgpTruth {
  double beta = 0.0;
  double first_stage = 0.0;
  double endogeneity = 0.0;
  double control_effect = 0.0;
};

struct SimulatedPanel {
  DataFrame panel;        // firm_id, occ_id, year, y, ai_stock, z, x1
  DataFrame firm_years;   // firm_id, year, ai_stock, z, x1
  std::vector<ExaminerRecord> records;
  DgpTruth truth;
};

// Outcome y = beta ai_stock + effects + c x1 + confounder + noise, where
// ai_stock = firm level + first_stage Z + confounder + noise and Z is the
// leniency instrument built from the generated examiner records.
SimulatedPanel simulate_dgp(const DgpConfig& config);

}  // namespace skillmap
