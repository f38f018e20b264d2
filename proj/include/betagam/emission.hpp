#pragma once

#include "betagam/numkernel.hpp"
#include "betagam/spline.hpp"

#include <Eigen/Dense>

#include <vector>

namespace betagam {

/// Box constraint on the Beta precision. phi_min = 1 throughout.
struct PhiBounds {
  double min = 1.0;
  double max = 500.0;

  double log_min() const { return std::log(min); }
  double log_max() const { return std::log(max); }
  double clamp(double phi) const { return std::fmin(std::fmax(phi, min), max); }
};

struct StateEmission {
  Eigen::VectorXd beta;  // pM spline coefficients
  double phi = 1.0;
};

struct EmissionEval {
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;  // clipped to [eps, 1-eps]
  Eigen::VectorXd logdens;
};

/// Proportions clipped once at ingestion, with the logs every density needs.
class Observations {
 public:
  explicit Observations(const Eigen::VectorXd& y, double eps = kClipEps);

  Eigen::Index size() const { return y_.size(); }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& log_y() const { return log_y_; }
  const Eigen::VectorXd& log1m_y() const { return log1m_y_; }
  /// Number of raw values moved by clipping.
  int clipped_count() const { return clipped_; }

 private:
  Eigen::VectorXd y_;
  Eigen::VectorXd log_y_;
  Eigen::VectorXd log1m_y_;
  int clipped_ = 0;
};

/// ln Beta(y; mu*phi, (1-mu)*phi). y and mu must already be clipped.
double beta_log_density(double y, double mu, double phi);

/// Clipped means logistic(B beta) for one state.
Eigen::VectorXd state_means(const Eigen::MatrixXd& basis, const Eigen::VectorXd& beta);

EmissionEval evaluate_state(const Observations& obs, const SplineDesign& design,
                            const StateEmission& state);

/// T x K matrix of log-densities.
Eigen::MatrixXd log_density_matrix(const Observations& obs, const SplineDesign& design,
                                   const std::vector<StateEmission>& states);

/// Gradient of sum_t w_t log f(y_t) - lambda beta'P beta with respect to beta.
Eigen::VectorXd grad_beta(const Observations& obs, const Eigen::VectorXd& weights,
                          const SplineDesign& design, const StateEmission& state, double lambda);

/// Gradient of the weighted log-likelihood with respect to log(phi).
double grad_log_phi(const Observations& obs, const Eigen::VectorXd& weights,
                    const SplineDesign& design, const StateEmission& state);

double penalized_objective(const Observations& obs, const Eigen::VectorXd& weights,
                           const SplineDesign& design, const StateEmission& state, double lambda);

struct ObjectiveWithGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;  // (beta..., log phi)
};

/// Value and gradient in one pass over the data, parametrised by (beta, log phi).
ObjectiveWithGradient penalized_objective_and_gradient(const Observations& obs,
                                                       const Eigen::VectorXd& weights,
                                                       const SplineDesign& design,
                                                       const Eigen::VectorXd& beta,
                                                       double log_phi, double lambda);

}  // namespace betagam
