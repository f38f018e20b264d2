#pragma once

#include "betagam/emission.hpp"
#include "betagam/hmm.hpp"
#include "betagam/optim.hpp"
#include "betagam/random.hpp"
#include "betagam/spline.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace betagam {

/// Full parameter set: chain, per-state (beta, phi), the design it lives on,
/// the smoothing parameter and the precision bounds.
struct ModelParams {
  ChainParams chain;
  std::vector<StateEmission> states;
  DesignSpec design;
  double lambda = 0.0;
  PhiBounds bounds;

  int num_states() const { return static_cast<int>(states.size()); }
  Eigen::VectorXd phis() const;
};

struct EmOptions {
  int max_iter = 300;
  double tol = 1e-6;  // on |delta penalized loglik| / (1 + |value|)
  double monotone_tol = 1e-8;
  optim::BoxLbfgsOptions inner;
};

struct FitResult {
  ModelParams params;
  double log_likelihood = 0.0;            // unpenalized, at params
  double penalized_log_likelihood = 0.0;  // log_likelihood - lambda * sum_k beta_k' P beta_k
  Posteriors posteriors;
  int n_iter = 0;
  bool converged = false;
  std::vector<double> ll_trace;  // penalized loglik after every E-step
  std::uint64_t seed = 0;
  int monotonicity_violations = 0;
  int m_step_warnings = 0;
};

struct MStepResult {
  StateEmission state;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int iterations = 0;
  bool warning = false;  // optimizer could not improve; init returned unchanged
};

/// Bounded quasi-Newton update of one state's (beta, log phi) that never
/// decreases the penalized objective. Zero total weight returns init.
MStepResult m_step_state(const Observations& obs, const Eigen::VectorXd& weights,
                         const SplineDesign& design, const StateEmission& init, double lambda,
                         const PhiBounds& bounds, const optim::BoxLbfgsOptions& options = {});

/// sum_k lambda * beta_k' P beta_k
double roughness_penalty(const ModelParams& params, const SplineDesign& design);

/// Order putting states by increasing phi, ties by average fitted mean.
std::vector<int> canonical_order(const ModelParams& params, const SplineDesign& design);

/// New state k takes old state order[k]; pi and both axes of A follow.
ModelParams permute_states(const ModelParams& params, const std::vector<int>& order);

/// Quantile-slice initialisation with rng jitter. Requires T >= 5K.
ModelParams initialize_params(const Observations& obs, const SplineDesign& design, int num_states,
                              double lambda, const PhiBounds& bounds, Rng& rng);

/// Classification start: consecutive blocks of `block` observations get random
/// labels, then labels and per-state logit-scale spline fits alternate until
/// stable. Requires T >= 5K.
ModelParams initialize_block_cluster(const Observations& obs, const SplineDesign& design, int num_states,
                                     double lambda, const PhiBounds& bounds, Rng& rng, int block = 8);

enum class InitStrategy {
  kQuantileSlice,
  kBlockCluster,
  kMixed,  // quantile slice for random start 0, block clustering for the rest
};

/// Penalized EM from `init` until the relative change of the penalized
/// log-likelihood drops below tol or max_iter is hit. States come back
/// ordered by increasing phi.
FitResult em_fit(const Observations& obs, const SplineDesign& design, const ModelParams& init,
                 const EmOptions& options = {});

/// E-step only: posteriors and log-likelihoods at fixed params.
FitResult evaluate_params(const Observations& obs, const SplineDesign& design, const ModelParams& params);

struct MultiStartOptions {
  int n_starts = 15;
  std::uint64_t seed = 0;
  int workers = 1;
  PhiBounds bounds;
  EmOptions em;
  InitStrategy init = InitStrategy::kMixed;
  /// Extra starting point tried first (bootstrap warm start).
  std::optional<ModelParams> warm_start;
};

struct MultiStartResult {
  FitResult best;
  int best_index = 0;
  std::vector<double> start_penalized_ll;  // NaN where the start failed
  std::vector<bool> start_converged;
  double best_median_gap = 0.0;
  int failed_starts = 0;
};

/// Seed used by random start `index` (the warm start, if any, is not counted).
std::uint64_t start_seed(std::uint64_t base, int index);

/// em_fit from n_starts random initialisations (plus the optional warm
/// start); the highest penalized log-likelihood wins, lowest index on ties.
MultiStartResult multi_start_fit(const Observations& obs, const SplineDesign& design, int num_states,
                                 double lambda, const MultiStartOptions& options);

}  // namespace betagam
