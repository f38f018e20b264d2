#pragma once

#include "betagam/emfit.hpp"
#include "betagam/modelselect.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace betagam {

/// Latent path with z_1 ~ pi and z_t | z_{t-1} ~ A row. States are 0-based.
std::vector<int> sample_chain(const ChainParams& chain, Eigen::Index T, Rng& rng);

struct SimulatedSeries {
  Eigen::VectorXd y;  // clipped to [eps, 1 - eps]
  std::vector<int> z;
};

/// Draws (y*, z*) from the fitted model at the design's covariates.
SimulatedSeries simulate_from_model(const ModelParams& params, const SplineDesign& design, Rng& rng);

/// State mean curves mu_k on an evaluation grid (points x K).
Eigen::MatrixXd mean_curves(const ModelParams& params, const Eigen::MatrixXd& grid_basis);

/// Order minimising sum_k ||cand[:, order[k]] - ref[:, k]||^2 over all K!
/// permutations; the lexicographically first minimiser wins ties.
std::vector<int> best_alignment(const Eigen::MatrixXd& candidate_curves, const Eigen::MatrixXd& reference_curves);

/// Relabels `candidate` so its curves best match `reference` on a 200-point grid.
ModelParams align_to_reference(const ModelParams& candidate, const ModelParams& reference, int grid_points = 200);

/// Inclusive empirical quantile (linear interpolation between order statistics).
double empirical_quantile(std::vector<double> values, double p);

struct BootstrapOptions {
  int B = 200;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int n_starts = 5;  // random starts in addition to the warm start
  int workers = 1;
  DiagnosticConfig diagnostics;
  EmOptions em;
  int curve_points = 200;
};

struct BootstrapReplicate {
  int index = 0;
  std::uint64_t seed = 0;
  ModelParams params;  // aligned to the reference
  bool converged = false;
  bool degenerate = false;
  bool failed = false;
  std::string error;
  bool valid() const { return !failed && converged && !degenerate; }
};

struct BootstrapEnsemble {
  std::vector<BootstrapReplicate> replicates;
  int B = 0;
  std::uint64_t base_seed = 0;

  std::vector<std::size_t> valid_indices() const;
};

struct IntervalRow {
  std::string parameter;  // phi_k, pi_k, A_i_j with 1-based indices
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  bool bias_warning = false;  // estimate outside [lower, upper]
};

struct CurveBandRow {
  int state = 0;  // 1-based
  double x = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct IntervalTable {
  std::vector<IntervalRow> rows;
  std::vector<CurveBandRow> curves;
  std::size_t n_valid = 0;
};

/// Valid replicates needed before intervals are reported: max(10, ceil(B/4)),
/// capped at B.
std::size_t required_valid_replicates(int B);

class InsufficientReplicatesError : public std::runtime_error {
 public:
  InsufficientReplicatesError(std::size_t valid, std::size_t required)
      : std::runtime_error("bootstrap: only " + std::to_string(valid) + " valid replicates, need " +
                           std::to_string(required)),
        valid_(valid) {}
  std::size_t valid() const { return valid_; }

 private:
  std::size_t valid_;
};

/// Refits B parametric resamples at the reference's (K, lambda), warm-started
/// at the reference, and aligns each to it.
BootstrapEnsemble bootstrap_ensemble(const ModelParams& reference, const SplineDesign& design,
                                     const BootstrapOptions& options);

/// Percentile intervals over the valid replicates of `ensemble`.
IntervalTable percentile_intervals(const BootstrapEnsemble& ensemble, const ModelParams& reference, double alpha,
                                   int curve_points = 200);

struct BootstrapResult {
  BootstrapEnsemble ensemble;
  IntervalTable table;
};

BootstrapResult bootstrap(const ModelParams& reference, const SplineDesign& design, const BootstrapOptions& options);

}  // namespace betagam
