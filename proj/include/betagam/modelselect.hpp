#pragma once

#include "betagam/emfit.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace betagam {

/// Scale-dependent thresholds of the degeneracy filter.
struct DiagnosticConfig {
  double phi_max = 500.0;
  double eps_sat = 1e-6;
  int s_thresh = 2;
  double delta_abs = 50.0;
  double delta_sum = 100.0;
  double occupancy_min = 0.05;

  /// (500, 50, 100): simulated data.
  static DiagnosticConfig simulation() { return {}; }
  /// (2000, 500, 1000): highly concentrated proportions.
  static DiagnosticConfig concentrated() { return {2000.0, 1e-6, 2, 500.0, 1000.0, 0.05}; }

  void validate() const;
};

struct DiagnosticReport {
  int n_sat = 0;
  std::vector<double> tail_deltas;  // ordered gaps Delta_{K-m} .. Delta_{K-1}
  double delta_tail = 0.0;
  Eigen::VectorXd occupancy;  // share of posterior mass per state
  bool flagged = false;
  std::vector<std::string> reasons;  // "saturation", "tail_jump", "tail_sum", "occupancy"
};

/// Precision-explosion indicator plus the minimum-occupancy rule.
DiagnosticReport diagnose(std::span<const double> phi_hat, const Eigen::VectorXd& occupancy,
                          const DiagnosticConfig& config);
DiagnosticReport diagnose(std::span<const double> phi_hat, const Posteriors& posteriors,
                          const DiagnosticConfig& config);

/// Column means of gamma.
Eigen::VectorXd state_occupancy(const Posteriors& posteriors);

struct EffectiveDof {
  Eigen::VectorXd per_state;
  double total = 0.0;  // sum_k nu_k + K + K(K-1)
  bool ridge_used = false;
};

/// nu_k = tr[(B'W_kB + lambda P)^{-1} B'W_kB] with W_k = diag(gamma_tk mu_kt (1 - mu_kt)).
EffectiveDof effective_dof(const SplineDesign& design, const Posteriors& posteriors, const ModelParams& params);

struct Criteria {
  double aic = 0.0;
  double bic = 0.0;
  double icl = 0.0;
};

/// -sum_t sum_k gamma log gamma with 0 log 0 = 0.
double posterior_entropy(const Eigen::MatrixXd& gamma);

Criteria criteria(double log_likelihood, double nu, double n_obs, double entropy);
Criteria criteria(const FitResult& fit, double nu);

/// One (K, lambda) cell of the selection grid.
struct GridCell {
  int K = 0;
  double lambda = 0.0;
  double log_likelihood = 0.0;
  double nu = 0.0;
  Criteria crit;
  DiagnosticReport diagnostics;
  bool converged = false;
  std::optional<FitResult> fit;  // absent when replayed from a table
};

struct Selection {
  int K = 0;
  double lambda = 0.0;
  std::size_t cell = 0;
  /// Stage 1 winner per K that has a valid cell: (K, cell index).
  std::vector<std::pair<int, std::size_t>> per_k;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::vector<std::size_t> valid;
  std::optional<Selection> chosen;
};

class NoValidModelError : public std::runtime_error {
 public:
  explicit NoValidModelError(GridResult grid)
      : std::runtime_error("every (K, lambda) cell was flagged as degenerate"), grid_(std::move(grid)) {}
  const GridResult& grid() const { return grid_; }

 private:
  GridResult grid_;
};

/// Two-stage rule over stored cells: lambda*(K) minimises AIC among valid
/// cells, then K* = max{K : BIC(K, lambda*(K)) <= min BIC + bic_tolerance}.
/// Returns nullopt when no cell is valid.
std::optional<Selection> select_model(const std::vector<GridCell>& cells, double bic_tolerance = 2.0);

struct GridOptions {
  std::vector<int> K_set;
  std::vector<double> lambda_set;
  DiagnosticConfig diagnostics;
  MultiStartOptions fit;  // seed here is the grid base seed
  double bic_tolerance = 2.0;
  int workers = 1;  // across cells, or across K with warm_continuation
  /// Also start each lambda (in the given order) from the previous lambda's
  /// best fit at the same K.
  bool warm_continuation = false;
};

/// Fits and scores a single cell.
GridCell fit_cell(const Observations& obs, const SplineDesign& design, int K, double lambda,
                  const MultiStartOptions& fit, const DiagnosticConfig& diag);

/// Fits every cell, then applies select_model. Throws NoValidModelError
/// (carrying the scored grid) when every cell is flagged.
GridResult grid_search(const Observations& obs, const SplineDesign& design, const GridOptions& options);

/// Seed for cell (K, lambda index) derived from the grid seed.
std::uint64_t cell_seed(std::uint64_t base, int K, std::size_t lambda_index);

}  // namespace betagam
