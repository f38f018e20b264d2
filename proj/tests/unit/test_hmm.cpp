#include "doctest.h"

#include "betagam/hmm.hpp"
#include "betagam/numkernel.hpp"
#include "betagam/random.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace betagam;

namespace {

ChainParams random_chain(int K, Rng& rng) {
  ChainParams c;
  c.pi.resize(K);
  c.A.resize(K, K);
  for (int k = 0; k < K; ++k) c.pi[k] = 0.05 + rng.uniform();
  c.pi /= c.pi.sum();
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) c.A(i, j) = 0.05 + rng.uniform();
    c.A.row(i) /= c.A.row(i).sum();
  }
  return c;
}

Eigen::MatrixXd random_emissions(int T, int K, Rng& rng) {
  Eigen::MatrixXd L(T, K);
  for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] = rng.normal(0.0, 2.0);
  return L;
}

struct Enumeration {
  double log_likelihood = kNegInf;
  Eigen::MatrixXd gamma;
  double best_joint = kNegInf;
};

// Sums P(z, y) over all K^T paths directly.
Enumeration enumerate(const Eigen::MatrixXd& L, const ChainParams& c) {
  const int T = static_cast<int>(L.rows());
  const int K = static_cast<int>(L.cols());
  std::vector<int> z(static_cast<std::size_t>(T), 0);
  std::vector<double> joints;
  std::vector<std::vector<int>> paths;
  while (true) {
    double lj = std::log(c.pi[z[0]]) + L(0, z[0]);
    for (int t = 1; t < T; ++t) lj += std::log(c.A(z[t - 1], z[t])) + L(t, z[t]);
    joints.push_back(lj);
    paths.push_back(z);
    int pos = T - 1;
    while (pos >= 0 && ++z[static_cast<std::size_t>(pos)] == K) z[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  Enumeration e;
  e.log_likelihood = log_sum_exp(joints);
  e.gamma = Eigen::MatrixXd::Zero(T, K);
  for (std::size_t n = 0; n < joints.size(); ++n) {
    const double w = std::exp(joints[n] - e.log_likelihood);
    for (int t = 0; t < T; ++t) e.gamma(t, paths[n][static_cast<std::size_t>(t)]) += w;
    e.best_joint = std::max(e.best_joint, joints[n]);
  }
  return e;
}

}  // namespace

TEST_CASE("forward-backward and Viterbi match enumeration on 200 instances") {
  Rng rng(41);
  double worst_ll = 0.0;
  double worst_gamma = 0.0;
  double worst_path = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int K = 1 + rep % 3;
    const int T = 1 + static_cast<int>(rng.uniform() * 8.0);
    const ChainParams c = random_chain(K, rng);
    const Eigen::MatrixXd L = random_emissions(T, K, rng);
    const Enumeration e = enumerate(L, c);
    const Posteriors p = forward_backward(L, c);
    worst_ll = std::max(worst_ll, std::abs(p.log_likelihood - e.log_likelihood));
    worst_gamma = std::max(worst_gamma, (p.gamma - e.gamma).cwiseAbs().maxCoeff());
    CHECK(marginal_log_likelihood(L, c) == p.log_likelihood);
    const std::vector<int> path = viterbi(L, c);
    worst_path = std::max(worst_path, std::abs(path_log_joint(L, c, path) - e.best_joint));
  }
  CHECK(worst_ll < 1e-10);
  CHECK(worst_gamma < 1e-10);
  CHECK(worst_path < 1e-10);
}

TEST_CASE("posterior normalisation and marginal consistency") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const int K = 2 + rep % 4;
    const ChainParams c = random_chain(K, rng);
    const Eigen::MatrixXd L = random_emissions(300, K, rng);
    const Posteriors p = forward_backward(L, c);
    for (Eigen::Index t = 0; t < p.gamma.rows(); ++t) CHECK(std::abs(p.gamma.row(t).sum() - 1.0) < 1e-10);
    for (Eigen::Index t = 0; t < p.xi.rows(); ++t) {
      CHECK(std::abs(p.xi.row(t).sum() - 1.0) < 1e-10);
      for (int i = 0; i < K; ++i) {
        double s = 0.0;
        for (int j = 0; j < K; ++j) s += p.xi_at(t, i, j);
        CHECK(std::abs(s - p.gamma(t, i)) < 1e-8);
      }
    }
  }
}

TEST_CASE("single state and single time point") {
  Rng rng(43);
  ChainParams one{Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1)};
  const Eigen::MatrixXd L = random_emissions(25, 1, rng);
  const Posteriors p = forward_backward(L, one);
  CHECK((p.gamma.array() == 1.0).all());
  CHECK(std::abs(p.log_likelihood - L.sum()) < 1e-12);
  for (int z : viterbi(L, one)) CHECK(z == 0);
  const ChainUpdate u = update_chain(p);
  CHECK(u.chain.pi[0] == 1.0);
  CHECK(u.chain.A(0, 0) == 1.0);

  const ChainParams c = random_chain(3, rng);
  const Eigen::MatrixXd L1 = random_emissions(1, 3, rng);
  const Posteriors p1 = forward_backward(L1, c);
  Eigen::VectorXd expect(3);
  for (int k = 0; k < 3; ++k) expect[k] = c.pi[k] * std::exp(L1(0, k));
  expect /= expect.sum();
  CHECK((p1.gamma.row(0).transpose() - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(p1.xi.rows() == 0);
}

TEST_CASE("uniform emissions give zero log-likelihood") {
  Rng rng(44);
  const ChainParams c = random_chain(3, rng);
  CHECK(std::abs(marginal_log_likelihood(Eigen::MatrixXd::Zero(50, 3), c)) < 1e-12);
}

TEST_CASE("adding a constant to every emission shifts only the likelihood") {
  Rng rng(45);
  const ChainParams c = random_chain(3, rng);
  const Eigen::MatrixXd L = random_emissions(200, 3, rng);
  const double shift = -37.5;
  const Eigen::MatrixXd Ls = (L.array() + shift).matrix();
  const Posteriors a = forward_backward(L, c);
  const Posteriors b = forward_backward(Ls, c);
  CHECK(std::abs(b.log_likelihood - (a.log_likelihood + 200 * shift)) < 1e-9);
  CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.xi - b.xi).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(viterbi(L, c) == viterbi(Ls, c));
}

TEST_CASE("Viterbi follows separated emissions and breaks ties low") {
  ChainParams c;
  c.pi = Eigen::Vector3d::Constant(1.0 / 3.0);
  c.A = Eigen::Matrix3d::Constant(0.01);
  c.A.diagonal().setConstant(0.98);
  Rng rng(46);
  Eigen::MatrixXd L = Eigen::MatrixXd::Constant(60, 3, -40.0);
  std::vector<int> truth(60);
  int state = 0;
  for (int t = 0; t < 60; ++t) {
    if (t % 15 == 0) state = static_cast<int>(rng.uniform() * 3.0);
    truth[static_cast<std::size_t>(t)] = state;
    L(t, state) = 0.0;
  }
  CHECK(viterbi(L, c) == truth);

  ChainParams sym;
  sym.pi = Eigen::Vector2d(0.5, 0.5);
  sym.A = Eigen::Matrix2d::Constant(0.5);
  const std::vector<int> tie = viterbi(Eigen::MatrixXd::Zero(5, 2), sym);
  for (int z : tie) CHECK(z == 0);
}

TEST_CASE("update_chain on a hard path counts transitions") {
  const std::vector<int> z{0, 0, 1, 1, 1, 0, 2, 2, 0, 0};
  const int K = 3;
  const auto T = static_cast<Eigen::Index>(z.size());
  Posteriors p;
  p.gamma = Eigen::MatrixXd::Zero(T, K);
  p.xi = Eigen::MatrixXd::Zero(T - 1, K * K);
  for (Eigen::Index t = 0; t < T; ++t) p.gamma(t, z[static_cast<std::size_t>(t)]) = 1.0;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(K, K);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const int i = z[static_cast<std::size_t>(t)];
    const int j = z[static_cast<std::size_t>(t + 1)];
    p.xi(t, i * K + j) = 1.0;
    counts(i, j) += 1.0;
  }
  const ChainUpdate u = update_chain(p);
  CHECK(u.empty_rows.empty());
  CHECK(u.chain.pi == Eigen::Vector3d(1.0, 0.0, 0.0));
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) CHECK(u.chain.A(i, j) == doctest::Approx(counts(i, j) / counts.row(i).sum()));
  }
}

TEST_CASE("update_chain flags states with no outgoing mass") {
  Posteriors p;
  p.gamma = Eigen::MatrixXd::Zero(4, 2);
  p.gamma.col(0).setOnes();
  p.xi = Eigen::MatrixXd::Zero(3, 4);
  p.xi.col(0).setOnes();
  const ChainUpdate u = update_chain(p);
  REQUIRE(u.empty_rows.size() == 1u);
  CHECK(u.empty_rows[0] == 1);
  CHECK(u.chain.A(1, 0) == 0.5);
  CHECK(u.chain.A(1, 1) == 0.5);
  CHECK(u.chain.A(0, 0) == 1.0);
}

TEST_CASE("posterior transition estimate recovers a persistent chain") {
  Rng rng(47);
  const int K = 4;
  const double delta = 0.95;
  ChainParams c;
  c.pi = Eigen::VectorXd::Constant(K, 1.0 / K);
  c.A = Eigen::MatrixXd::Constant(K, K, (1.0 - delta) / (K - 1));
  c.A.diagonal().setConstant(delta);
  const Eigen::Index T = 2500;
  Eigen::MatrixXd L(T, K);
  int z = rng.categorical(std::span<const double>(c.pi.data(), K));
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      Eigen::VectorXd row = c.A.row(z).transpose();
      z = rng.categorical(std::span<const double>(row.data(), K));
    }
    // Noisy Gaussian-like evidence centred on the true state.
    for (int k = 0; k < K; ++k) {
      const double d = k - z + rng.normal(0.0, 0.6);
      L(t, k) = -0.5 * d * d;
    }
  }
  const ChainUpdate u = update_chain(forward_backward(L, c));
  for (int k = 0; k < K; ++k) CHECK(std::abs(u.chain.A(k, k) - delta) < 0.02);
  for (int i = 0; i < K; ++i) CHECK(std::abs(u.chain.A.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("chain validation and impossible observations") {
  ChainParams bad{Eigen::Vector2d(0.7, 0.7), Eigen::Matrix2d::Identity()};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ChainParams absorbing{Eigen::Vector2d(1.0, 0.0), Eigen::Matrix2d::Identity()};
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(3, 2);
  L(1, 0) = kNegInf;
  CHECK_THROWS_AS(forward_backward(L, absorbing), std::runtime_error);
}
