#pragma once

#include <Eigen/Dense>

#include <vector>

namespace betagam {

/// Initial distribution and row-stochastic transition matrix.
struct ChainParams {
  Eigen::VectorXd pi;
  Eigen::MatrixXd A;

  int num_states() const { return static_cast<int>(pi.size()); }

  /// Throws std::invalid_argument unless pi and every row of A are
  /// non-negative and sum to 1 within `tol`.
  void validate(double tol = 1e-10) const;
};

struct Posteriors {
  Eigen::MatrixXd gamma;  // T x K smoothed state probabilities
  Eigen::MatrixXd xi;     // (T-1) x (K*K), row t holds xi_t(i, j) at column i*K + j
  double log_likelihood = 0.0;

  int num_states() const { return static_cast<int>(gamma.cols()); }
  double xi_at(Eigen::Index t, int i, int j) const { return xi(t, i * num_states() + j); }
};

/// Log-space forward-backward. Throws std::runtime_error if at some t every
/// state has zero probability.
Posteriors forward_backward(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// log P(y) from the forward pass alone; equals forward_backward().log_likelihood.
double marginal_log_likelihood(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// Most probable path (0-based states). Ties go to the lowest state index.
std::vector<int> viterbi(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// log P(z, y) of one explicit path.
double path_log_joint(const Eigen::MatrixXd& log_emissions, const ChainParams& chain,
                      const std::vector<int>& path);

struct ChainUpdate {
  ChainParams chain;
  /// States whose outgoing posterior mass was zero; their rows were set uniform.
  std::vector<int> empty_rows;
};

/// pi = gamma_1, A_ij = sum_t xi_tij / sum_t gamma_ti (t < T), rows renormalised.
ChainUpdate update_chain(const Posteriors& posteriors);

}  // namespace betagam
