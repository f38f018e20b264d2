#include "betagam/emission.hpp"

#include <stdexcept>
#include <string>

namespace betagam {

Observations::Observations(const Eigen::VectorXd& y, double eps)
    : y_(y.size()), log_y_(y.size()), log1m_y_(y.size()) {
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (std::isnan(y[t])) throw std::invalid_argument("Observations: NaN proportion at index " + std::to_string(t));
    const double c = clip_unit(y[t], eps);
    if (c != y[t]) ++clipped_;
    y_[t] = c;
    log_y_[t] = std::log(c);
    log1m_y_[t] = std::log1p(-c);
  }
}

double beta_log_density(double y, double mu, double phi) {
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return log_gamma(phi) - log_gamma(a) - log_gamma(b) + (a - 1.0) * std::log(y) +
         (b - 1.0) * std::log1p(-y);
}

Eigen::VectorXd state_means(const Eigen::MatrixXd& basis, const Eigen::VectorXd& beta) {
  Eigen::VectorXd mu = basis * beta;
  for (Eigen::Index t = 0; t < mu.size(); ++t) mu[t] = clip_unit(logistic(mu[t]));
  return mu;
}

namespace {

void check_dims(const Observations& obs, const SplineDesign& design, const Eigen::VectorXd& beta) {
  if (design.rows() != obs.size()) {
    throw std::invalid_argument("emission: design has " + std::to_string(design.rows()) +
                                " rows but there are " + std::to_string(obs.size()) + " observations");
  }
  if (beta.size() != design.cols()) {
    throw std::invalid_argument("emission: coefficient length does not match the design");
  }
}

void check_weights(const Observations& obs, const Eigen::VectorXd& weights) {
  if (weights.size() != obs.size()) throw std::invalid_argument("emission: weight length mismatch");
}

// Same arithmetic as beta_log_density, reusing the cached logs of y.
double cached_log_density(const Observations& obs, Eigen::Index t, double mu, double phi,
                          double lg_phi) {
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return lg_phi - log_gamma(a) - log_gamma(b) + (a - 1.0) * obs.log_y()[t] +
         (b - 1.0) * obs.log1m_y()[t];
}

}  // namespace

EmissionEval evaluate_state(const Observations& obs, const SplineDesign& design,
                            const StateEmission& state) {
  check_dims(obs, design, state.beta);
  EmissionEval ev;
  ev.eta = design.basis * state.beta;
  ev.mu.resize(ev.eta.size());
  ev.logdens.resize(ev.eta.size());
  const double lg_phi = log_gamma(state.phi);
  for (Eigen::Index t = 0; t < ev.eta.size(); ++t) {
    ev.mu[t] = clip_unit(logistic(ev.eta[t]));
    ev.logdens[t] = cached_log_density(obs, t, ev.mu[t], state.phi, lg_phi);
  }
  return ev;
}

Eigen::MatrixXd log_density_matrix(const Observations& obs, const SplineDesign& design,
                                   const std::vector<StateEmission>& states) {
  Eigen::MatrixXd out(obs.size(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = evaluate_state(obs, design, states[k]).logdens;
  }
  return out;
}

ObjectiveWithGradient penalized_objective_and_gradient(const Observations& obs,
                                                       const Eigen::VectorXd& weights,
                                                       const SplineDesign& design,
                                                       const Eigen::VectorXd& beta,
                                                       double log_phi, double lambda) {
  check_dims(obs, design, beta);
  check_weights(obs, weights);
  const double phi = std::exp(log_phi);
  const GammaPair at_phi = log_gamma_digamma(phi);
  const Eigen::VectorXd eta = design.basis * beta;
  // score_eta[t] = w_t * d log f / d eta_t
  Eigen::VectorXd score_eta = Eigen::VectorXd::Zero(eta.size());
  double loglik = 0.0;
  double dphi = 0.0;
  for (Eigen::Index t = 0; t < eta.size(); ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const double mu = clip_unit(logistic(eta[t]));
    const double a = mu * phi;
    const double b = (1.0 - mu) * phi;
    const GammaPair ga = log_gamma_digamma(a);
    const GammaPair gb = log_gamma_digamma(b);
    const double ly = obs.log_y()[t];
    const double l1y = obs.log1m_y()[t];
    loglik += w * (at_phi.log_gamma - ga.log_gamma - gb.log_gamma + (a - 1.0) * ly + (b - 1.0) * l1y);
    score_eta[t] = w * phi * ((ly - l1y) - ga.digamma + gb.digamma) * mu * (1.0 - mu);
    dphi += w * (at_phi.digamma - mu * ga.digamma - (1.0 - mu) * gb.digamma + mu * ly + (1.0 - mu) * l1y);
  }
  const Eigen::VectorXd p_beta = design.penalty * beta;
  ObjectiveWithGradient out;
  out.value = loglik - lambda * beta.dot(p_beta);
  out.gradient.resize(beta.size() + 1);
  out.gradient.head(beta.size()) = design.basis.transpose() * score_eta - 2.0 * lambda * p_beta;
  out.gradient[beta.size()] = phi * dphi;
  return out;
}

Eigen::VectorXd grad_beta(const Observations& obs, const Eigen::VectorXd& weights,
                          const SplineDesign& design, const StateEmission& state, double lambda) {
  check_dims(obs, design, state.beta);
  check_weights(obs, weights);
  const double phi = state.phi;
  const Eigen::VectorXd eta = design.basis * state.beta;
  Eigen::VectorXd score_eta = Eigen::VectorXd::Zero(eta.size());
  for (Eigen::Index t = 0; t < eta.size(); ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const double mu = clip_unit(logistic(eta[t]));
    const double logit_y = obs.log_y()[t] - obs.log1m_y()[t];
    score_eta[t] = w * phi * (logit_y - digamma(mu * phi) + digamma((1.0 - mu) * phi)) * mu * (1.0 - mu);
  }
  return design.basis.transpose() * score_eta - 2.0 * lambda * (design.penalty * state.beta);
}

double grad_log_phi(const Observations& obs, const Eigen::VectorXd& weights,
                    const SplineDesign& design, const StateEmission& state) {
  check_dims(obs, design, state.beta);
  check_weights(obs, weights);
  const double phi = state.phi;
  const double psi_phi = digamma(phi);
  const Eigen::VectorXd eta = design.basis * state.beta;
  double acc = 0.0;
  for (Eigen::Index t = 0; t < eta.size(); ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    const double mu = clip_unit(logistic(eta[t]));
    acc += w * (psi_phi - mu * digamma(mu * phi) - (1.0 - mu) * digamma((1.0 - mu) * phi) +
                mu * obs.log_y()[t] + (1.0 - mu) * obs.log1m_y()[t]);
  }
  return phi * acc;
}

double penalized_objective(const Observations& obs, const Eigen::VectorXd& weights,
                           const SplineDesign& design, const StateEmission& state, double lambda) {
  check_weights(obs, weights);
  const EmissionEval ev = evaluate_state(obs, design, state);
  return weights.dot(ev.logdens) - lambda * state.beta.dot(design.penalty * state.beta);
}

}  // namespace betagam
