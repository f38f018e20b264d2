#include "doctest.h"

#include "betagam/spline.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace betagam;

namespace {

// Textbook recursive Cox-de Boor, right-continuous, with the last interval closed at hi.
double cox_de_boor(const std::vector<double>& U, int i, int p, double u, double hi) {
  if (p == 0) {
    if (U[i] <= u && u < U[i + 1]) return 1.0;
    if (u == hi && U[i] < U[i + 1] && U[i + 1] == hi) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double d1 = U[i + p] - U[i];
  const double d2 = U[i + p + 1] - U[i + 1];
  if (d1 > 0.0) out += (u - U[i]) / d1 * cox_de_boor(U, i, p - 1, u, hi);
  if (d2 > 0.0) out += (U[i + p + 1] - u) / d2 * cox_de_boor(U, i + 1, p - 1, u, hi);
  return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("knot counting") {
  const auto x = linspace(-2.0, 2.0, 501);
  const KnotVector k6 = build_knots(x, 6, 3);
  CHECK(k6.num_basis() == 10);
  CHECK(k6.full.size() == 14u);
  CHECK(k6.lo == -2.0);
  CHECK(k6.hi == 2.0);
  for (std::size_t i = 1; i < k6.inner.size(); ++i) CHECK(k6.inner[i] > k6.inner[i - 1]);
  for (std::size_t i = 0; i < k6.inner.size(); ++i) {
    CHECK(std::abs(k6.inner[i] - (-2.0 + 4.0 * static_cast<double>(i + 1) / 7.0)) < 1e-12);
  }
  CHECK(build_knots(x, 0, 3).num_basis() == 4);
}

TEST_CASE("single inner knot sits at the median") {
  const std::vector<double> x{0.0, 0.1, 0.15, 0.3, 0.7, 0.9, 1.0};
  const KnotVector k = build_knots(x, 1, 3);
  REQUIRE(k.inner.size() == 1u);
  CHECK(k.inner[0] == doctest::Approx(0.3).epsilon(1e-15));
  const std::vector<double> even{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  CHECK(build_knots(even, 1, 3).inner[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("build_knots rejects too few distinct values") {
  const std::vector<double> x{1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0};
  CHECK_THROWS_AS(build_knots(x, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(KnotVector::make(3, {0.5, 0.4}, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(KnotVector::make(3, {1.0}, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("degree zero indicator basis") {
  const KnotVector k = KnotVector::make(0, {0.5}, 0.0, 1.0);
  const std::vector<double> x{0.25, 0.75, 1.0};
  const Eigen::MatrixXd B = evaluate_basis(k, x);
  CHECK(B(0, 0) == 1.0);
  CHECK(B(0, 1) == 0.0);
  CHECK(B(1, 1) == 1.0);
  CHECK(B(2, 1) == 1.0);
}

TEST_CASE("cubic basis matches the recursive oracle and is a partition of unity") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> sample(300);
  for (auto& v : sample) v = u(gen);
  const KnotVector k = build_knots(sample, 6, 3);
  std::vector<double> x = linspace(k.lo, k.hi, 1001);
  const Eigen::MatrixXd B = evaluate_basis(k, x);
  double worst_oracle = 0.0;
  double worst_sum = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (int j = 0; j < k.num_basis(); ++j) {
      const double ref = cox_de_boor(k.full, j, 3, x[t], k.hi);
      worst_oracle = std::max(worst_oracle, std::abs(B(static_cast<Eigen::Index>(t), j) - ref));
      CHECK(B(static_cast<Eigen::Index>(t), j) >= 0.0);
    }
    worst_sum = std::max(worst_sum, std::abs(B.row(static_cast<Eigen::Index>(t)).sum() - 1.0));
  }
  CHECK(worst_oracle < 1e-12);
  CHECK(worst_sum < 1e-12);
}

TEST_CASE("clamped endpoints and out-of-range clamping") {
  const KnotVector k = KnotVector::make(3, {-1.0, 0.0, 1.0}, -2.0, 2.0);
  const std::vector<double> x{-2.0, 2.0, -7.0, 9.0};
  const Eigen::MatrixXd B = evaluate_basis(k, x);
  const int M = k.num_basis();
  CHECK(B(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(B.row(0).tail(M - 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(B(1, M - 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(B.row(2) == B.row(0));
  CHECK(B.row(3) == B.row(1));
}

TEST_CASE("difference operators") {
  const Eigen::MatrixXd D1 = difference_operator(3, 1);
  Eigen::MatrixXd D1_ref(2, 3);
  D1_ref << 1, -1, 0, 0, 1, -1;
  CHECK((D1 - D1_ref).norm() == 0.0);

  const Eigen::MatrixXd D2 = difference_operator(4, 2);
  Eigen::MatrixXd D2_ref(2, 4);
  D2_ref << 1, -2, 1, 0, 0, 1, -2, 1;
  CHECK((D2 - D2_ref).norm() == 0.0);

  const Eigen::MatrixXd P = difference_penalty(4, 2);
  CHECK(P(0, 0) == 1.0);
  CHECK(P(1, 1) == 5.0);
  CHECK(P(1, 2) == -4.0);
  CHECK((P - P.transpose()).norm() == 0.0);

  CHECK_THROWS_AS(difference_penalty(4, 4), std::invalid_argument);
  CHECK_THROWS_AS(difference_penalty(4, 0), std::invalid_argument);
}

TEST_CASE("second-order penalty annihilates affine sequences") {
  for (int M : {4, 7, 10, 13}) {
    const Eigen::MatrixXd P = difference_penalty(M, 2);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(M, 3.2);
    const Eigen::VectorXd ramp = Eigen::VectorXd::LinSpaced(M, -1.0, 4.0);
    CHECK((P * c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((P * ramp).cwiseAbs().maxCoeff() < 1e-12);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    const Eigen::VectorXd ev = es.eigenvalues();
    int zeros = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      CHECK(ev[i] > -1e-10);
      if (std::abs(ev[i]) < 1e-10) ++zeros;
    }
    CHECK(zeros == 2);
  }
}

TEST_CASE("penalty quadratic form equals explicit differencing") {
  std::mt19937_64 gen(22);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int d : {1, 2, 3}) {
    const int M = 10;
    const Eigen::MatrixXd P = difference_penalty(M, d);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> beta(M);
      for (auto& b : beta) b = n(gen);
      Eigen::VectorXd bv = Eigen::Map<Eigen::VectorXd>(beta.data(), M);
      std::vector<double> diff = beta;
      for (int k = 0; k < d; ++k) {
        for (std::size_t i = 0; i + 1 < diff.size(); ++i) diff[i] = diff[i + 1] - diff[i];
        diff.pop_back();
      }
      double ref = 0.0;
      for (double v : diff) ref += v * v;
      CHECK(std::abs(bv.dot(P * bv) - ref) < 1e-12 * std::max(1.0, ref));
    }
  }
}

TEST_CASE("assemble_design concatenates blocks") {
  const auto x = linspace(0.0, 1.0, 50);
  const KnotVector k = build_knots(x, 6, 3);
  CovariateBlock b{k, evaluate_basis(k, x), difference_penalty(k.num_basis(), 2)};

  const SplineDesign one = assemble_design({b}, 2);
  CHECK(one.basis == b.basis);
  CHECK(one.penalty == b.penalty);
  CHECK(one.blocks.size() == 1u);

  const SplineDesign two = assemble_design({b, b}, 2);
  CHECK(two.cols() == 20);
  CHECK(two.penalty.rows() == 20);
  CHECK(two.penalty.topRightCorner(10, 10).norm() == 0.0);
  CHECK(two.penalty.bottomLeftCorner(10, 10).norm() == 0.0);
  CHECK(two.penalty.bottomRightCorner(10, 10) == b.penalty);
  CHECK(two.blocks[1].offset == 10);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(two.penalty);
  int zeros = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) zeros += std::abs(es.eigenvalues()[i]) < 1e-10;
  CHECK(zeros == 4);

  CHECK_THROWS_AS(assemble_design({}, 2), std::invalid_argument);
  CovariateBlock short_block = b;
  short_block.basis = b.basis.topRows(10);
  CHECK_THROWS_AS(assemble_design({b, short_block}, 2), std::invalid_argument);
}

TEST_CASE("rebuild_design reproduces the training basis") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd X(200, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(gen);
  const SplineDesign d = build_design(X, 5, 3, 2);
  CHECK(d.cols() == 18);
  const SplineDesign r = rebuild_design(d.spec, X);
  CHECK(r.basis == d.basis);
  CHECK(r.penalty == d.penalty);
  CHECK(d.evaluate(X) == d.basis);

  const Eigen::MatrixXd grid = covariate_grid(d.spec, 200);
  CHECK(grid.rows() == 200);
  CHECK(grid.cols() == 2);
  for (int j = 0; j < 2; ++j) {
    CHECK(grid(0, j) == d.spec.knots[static_cast<std::size_t>(j)].lo);
    CHECK(grid(199, j) == doctest::Approx(d.spec.knots[static_cast<std::size_t>(j)].hi).epsilon(1e-15));
  }
}
