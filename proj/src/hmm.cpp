#include "betagam/hmm.hpp"

#include "betagam/numkernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace betagam {

void ChainParams::validate(double tol) const {
  const auto k = pi.size();
  if (k == 0) throw std::invalid_argument("ChainParams: no states");
  if (A.rows() != k || A.cols() != k) throw std::invalid_argument("ChainParams: A must be K x K");
  if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > tol) {
    throw std::invalid_argument("ChainParams: pi is not a probability vector");
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    if ((A.row(i).array() < 0.0).any() || std::abs(A.row(i).sum() - 1.0) > tol) {
      throw std::invalid_argument("ChainParams: row " + std::to_string(i) + " of A is not stochastic");
    }
  }
}

namespace {

Eigen::MatrixXd log_matrix(const Eigen::MatrixXd& m) { return m.array().log().matrix(); }

void check_shapes(const Eigen::MatrixXd& log_em, const ChainParams& chain) {
  if (log_em.rows() == 0) throw std::invalid_argument("hmm: empty observation sequence");
  if (log_em.cols() != chain.pi.size() || chain.A.rows() != chain.pi.size() ||
      chain.A.cols() != chain.pi.size()) {
    throw std::invalid_argument("hmm: emission columns do not match the number of states");
  }
}

// log alpha_t(k); row t is the forward variable at time t.
Eigen::MatrixXd forward_pass(const Eigen::MatrixXd& log_em, const Eigen::VectorXd& log_pi,
                             const Eigen::MatrixXd& log_a) {
  const Eigen::Index T = log_em.rows();
  const Eigen::Index K = log_em.cols();
  Eigen::MatrixXd alpha(T, K);
  for (Eigen::Index k = 0; k < K; ++k) alpha(0, k) = log_pi[k] + log_em(0, k);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      double acc = kNegInf;
      for (Eigen::Index i = 0; i < K; ++i) acc = log_add_exp(acc, alpha(t - 1, i) + log_a(i, j));
      alpha(t, j) = acc + log_em(t, j);
    }
  }
  return alpha;
}

double row_log_sum(const Eigen::MatrixXd& m, Eigen::Index row) {
  double acc = kNegInf;
  for (Eigen::Index k = 0; k < m.cols(); ++k) acc = log_add_exp(acc, m(row, k));
  return acc;
}

}  // namespace

double marginal_log_likelihood(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_shapes(log_emissions, chain);
  const Eigen::MatrixXd alpha = forward_pass(log_emissions, chain.pi.array().log().matrix(), log_matrix(chain.A));
  return row_log_sum(alpha, alpha.rows() - 1);
}

Posteriors forward_backward(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_shapes(log_emissions, chain);
  const Eigen::Index T = log_emissions.rows();
  const Eigen::Index K = log_emissions.cols();
  const Eigen::MatrixXd log_a = log_matrix(chain.A);
  const Eigen::MatrixXd alpha = forward_pass(log_emissions, chain.pi.array().log().matrix(), log_a);

  Eigen::MatrixXd beta(T, K);
  beta.row(T - 1).setZero();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < K; ++i) {
      double acc = kNegInf;
      for (Eigen::Index j = 0; j < K; ++j) {
        acc = log_add_exp(acc, log_a(i, j) + log_emissions(t + 1, j) + beta(t + 1, j));
      }
      beta(t, i) = acc;
    }
  }

  Posteriors post;
  post.log_likelihood = row_log_sum(alpha, T - 1);
  post.gamma.resize(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    double norm = kNegInf;
    for (Eigen::Index k = 0; k < K; ++k) norm = log_add_exp(norm, alpha(t, k) + beta(t, k));
    if (norm == kNegInf || std::isnan(norm)) {
      throw std::runtime_error("forward_backward: every state has zero probability at t=" + std::to_string(t));
    }
    for (Eigen::Index k = 0; k < K; ++k) post.gamma(t, k) = std::exp(alpha(t, k) + beta(t, k) - norm);
  }

  post.xi.resize(T > 1 ? T - 1 : 0, K * K);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    double norm = kNegInf;
    for (Eigen::Index i = 0; i < K; ++i) {
      for (Eigen::Index j = 0; j < K; ++j) {
        const double v = alpha(t, i) + log_a(i, j) + log_emissions(t + 1, j) + beta(t + 1, j);
        post.xi(t, i * K + j) = v;
        norm = log_add_exp(norm, v);
      }
    }
    for (Eigen::Index c = 0; c < K * K; ++c) post.xi(t, c) = std::exp(post.xi(t, c) - norm);
  }
  return post;
}

std::vector<int> viterbi(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_shapes(log_emissions, chain);
  const Eigen::Index T = log_emissions.rows();
  const Eigen::Index K = log_emissions.cols();
  const Eigen::MatrixXd log_a = log_matrix(chain.A);
  Eigen::MatrixXd delta(T, K);
  Eigen::MatrixXi back(T, K);
  for (Eigen::Index k = 0; k < K; ++k) delta(0, k) = std::log(chain.pi[k]) + log_emissions(0, k);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      Eigen::Index best = 0;
      double best_val = delta(t - 1, 0) + log_a(0, j);
      for (Eigen::Index i = 1; i < K; ++i) {
        const double v = delta(t - 1, i) + log_a(i, j);
        if (v > best_val) {
          best_val = v;
          best = i;
        }
      }
      delta(t, j) = best_val + log_emissions(t, j);
      back(t, j) = static_cast<int>(best);
    }
  }
  std::vector<int> path(static_cast<std::size_t>(T));
  Eigen::Index last = 0;
  for (Eigen::Index k = 1; k < K; ++k) {
    if (delta(T - 1, k) > delta(T - 1, last)) last = k;
  }
  path[static_cast<std::size_t>(T - 1)] = static_cast<int>(last);
  for (Eigen::Index t = T - 1; t > 0; --t) {
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  }
  return path;
}

double path_log_joint(const Eigen::MatrixXd& log_emissions, const ChainParams& chain,
                      const std::vector<int>& path) {
  check_shapes(log_emissions, chain);
  if (static_cast<Eigen::Index>(path.size()) != log_emissions.rows()) {
    throw std::invalid_argument("path_log_joint: path length mismatch");
  }
  double acc = std::log(chain.pi[path[0]]) + log_emissions(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) {
    acc += std::log(chain.A(path[t - 1], path[t])) + log_emissions(static_cast<Eigen::Index>(t), path[t]);
  }
  return acc;
}

ChainUpdate update_chain(const Posteriors& posteriors) {
  const Eigen::Index T = posteriors.gamma.rows();
  const int K = posteriors.num_states();
  ChainUpdate out;
  out.chain.pi = posteriors.gamma.row(0).transpose();
  out.chain.pi /= out.chain.pi.sum();
  out.chain.A = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd outgoing = Eigen::VectorXd::Zero(K);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (int i = 0; i < K; ++i) {
      outgoing[i] += posteriors.gamma(t, i);
      for (int j = 0; j < K; ++j) out.chain.A(i, j) += posteriors.xi(t, i * K + j);
    }
  }
  for (int i = 0; i < K; ++i) {
    if (!(outgoing[i] > 0.0)) {
      out.chain.A.row(i).setConstant(1.0 / K);
      out.empty_rows.push_back(i);
      continue;
    }
    out.chain.A.row(i) /= outgoing[i];
    out.chain.A.row(i) /= out.chain.A.row(i).sum();
  }
  return out;
}

}  // namespace betagam
