#pragma once

#include "betagam/modelselect.hpp"
#include "betagam/simulate.hpp"
#include "betagam/uncertainty.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace betagam {

inline constexpr int kModelSchemaVersion = 1;
inline constexpr const char* kSoftwareVersion = "1.0.0";

/// Malformed input or unreadable/unwritable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that reads back to the same double ("nan", "inf", "-inf" otherwise).
std::string format_double(double v);
double parse_double(const std::string& text);

/// Columns t, y, x1..xp.
struct Dataset {
  std::vector<long long> t;
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // T x p
  std::vector<std::string> covariate_names;
};

/// Rows must have consecutive t. Errors carry the offending line number.
Dataset read_dataset(const std::string& path);
void write_dataset(const std::string& path, const Dataset& data);

/// Per-fit summary stored next to the parameters.
struct ModelReport {
  double log_likelihood = 0.0;
  double penalized_log_likelihood = 0.0;
  double nu = 0.0;
  Criteria crit;
  DiagnosticReport diagnostics;
  bool converged = false;
  int n_iter = 0;
  std::uint64_t seed = 0;
  int n_starts = 0;
  double best_median_gap = 0.0;
  int failed_starts = 0;
  int clipped = 0;
};

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ModelParams& params, const ModelReport& report);
void save_model(const std::string& path, const ModelParams& params, const ModelReport& report);

struct LoadedModel {
  ModelParams params;
  ModelReport report;
};
LoadedModel load_model(const std::string& path);

/// Scores a finished fit: nu, criteria and diagnostics.
ModelReport make_report(const FitResult& fit, const SplineDesign& design, const DiagnosticConfig& diag);

/// Human-readable fit summary.
void write_report(std::ostream& out, const ModelParams& params, const ModelReport& report);

void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells);
/// Rows of a grid table (without fits) for replaying the selection.
std::vector<GridCell> read_grid_csv(const std::string& path);

void write_intervals_csv(const std::string& path, const IntervalTable& table);
void write_curves_csv(const std::string& path, const IntervalTable& table);
nlohmann::json ensemble_to_json(const BootstrapEnsemble& ensemble);

void write_replicates_csv(const std::string& path, const std::vector<McReplicate>& replicates);
std::vector<McReplicate> read_replicates_csv(const std::string& path);
nlohmann::json summary_to_json(const McSummary& summary);

/// Throw IoError on failure.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace betagam
