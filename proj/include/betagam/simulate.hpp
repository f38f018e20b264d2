#pragma once

#include "betagam/emfit.hpp"
#include "betagam/modelselect.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace betagam {

/// Logit-scale mean function: c + a x + q x^2 + s sin(w x) + e exp(r x).
struct MeanFunction {
  double constant = 0.0;
  double linear = 0.0;
  double quadratic = 0.0;
  double sin_amp = 0.0;
  double sin_freq = 1.0;
  double exp_amp = 0.0;
  double exp_rate = 1.0;

  double operator()(double x) const;

  /// Built-in quartet f1..f4 (index 1-4).
  static MeanFunction builtin(int index);
};

struct ScenarioConfig {
  int T = 2500;
  int K_true = 4;
  double delta = 0.95;
  std::vector<double> phi_true{10.0, 18.0, 28.0, 40.0};
  double x_lo = -2.0;
  double x_hi = 2.0;
  std::vector<MeanFunction> mean_functions{MeanFunction::builtin(1), MeanFunction::builtin(2),
                                           MeanFunction::builtin(3), MeanFunction::builtin(4)};
  int inner_knots = 6;
  std::uint64_t seed = 0;

  /// T = 2500, delta = 0.95.
  static ScenarioConfig baseline();
  /// T = 1500, delta = 0.85.
  static ScenarioConfig hard();

  void validate() const;
  /// Uniform pi; diagonal delta, off-diagonal (1 - delta) / (K - 1).
  ChainParams true_chain() const;
};

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& json_text);
std::string scenario_to_json(const ScenarioConfig& config);

struct SimulatedDataset {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  std::vector<int> z;       // 0-based true states
  Eigen::VectorXd true_mu;  // mu_{z_t}(x_t)
};

SimulatedDataset generate_dataset(const ScenarioConfig& config, Rng& rng);

/// True mean curves (points x K) on an equally spaced grid over [x_lo, x_hi].
Eigen::MatrixXd true_curves(const ScenarioConfig& config, const Eigen::VectorXd& grid);

/// Least-squares spline coefficients reproducing each logit-scale f_k on a fine grid.
std::vector<Eigen::VectorXd> true_beta_equivalents(const ScenarioConfig& config, const DesignSpec& spec,
                                                   int points = 1000);

/// Fitting recipe applied inside each Monte Carlo replicate.
struct FitSpec {
  std::vector<double> lambdas{0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0};
  int n_starts = 15;
  int degree = 3;
  int penalty_order = 2;
  PhiBounds bounds;
  DiagnosticConfig diagnostics;
  EmOptions em;
  /// Also start each lambda from the previous lambda's best fit.
  bool warm_continuation = false;
};

struct McReplicate {
  int id = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double curve_rmse = 0.0;
  double phi_rmse = 0.0;
  double A_rmse = 0.0;
  double accuracy = 0.0;
  bool converged = false;
  bool flagged = false;
  bool failed = false;
  std::string error;
  bool valid() const { return !failed && converged && !flagged; }
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
};

struct McSummary {
  int n_total = 0;
  int n_valid = 0;
  MetricSummary curve_rmse;
  MetricSummary phi_rmse;
  MetricSummary A_rmse;
  MetricSummary accuracy;
  std::map<double, int> lambda_tally;  // over valid replicates
};

struct McResult {
  std::vector<McReplicate> replicates;
  McSummary summary;
};

struct TruthMetrics {
  double curve_rmse = 0.0;
  double phi_rmse = 0.0;
  double A_rmse = 0.0;
  double accuracy = 0.0;
};

/// Aligns `fit` to the truth by curve distance and scores it.
TruthMetrics score_against_truth(const FitResult& fit, const SplineDesign& design, const ScenarioConfig& config,
                                 const SimulatedDataset& data, int grid_points = 200);

McReplicate run_replicate(const ScenarioConfig& config, const FitSpec& spec, std::uint64_t seed, int id);

/// Mean and sample sd over valid replicates, plus the lambda tally.
McSummary summarize_replicates(const std::vector<McReplicate>& replicates);

McResult run_monte_carlo(const ScenarioConfig& config, int R, const FitSpec& spec, std::uint64_t seed,
                         int workers = 1);

}  // namespace betagam
