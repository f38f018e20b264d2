#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace betagam {

/// Clamped knot sequence for one covariate.
struct KnotVector {
  int degree = 3;
  std::vector<double> inner;  // strictly increasing, strictly inside (lo, hi)
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> full;  // degree+1 copies of lo, inner, degree+1 copies of hi

  int num_basis() const { return static_cast<int>(inner.size()) + degree + 1; }

  /// Rebuilds `full` from (degree, inner, lo, hi) and checks the invariants.
  static KnotVector make(int degree, std::vector<double> inner, double lo, double hi);
};

/// Inner knots at equally spaced quantiles of x, boundary knots at min/max.
/// Requires at least degree+2 distinct values.
KnotVector build_knots(std::span<const double> x_values, int inner_count, int degree);

/// Cox-de Boor evaluation, one row per x. Values outside [lo, hi] are clamped.
Eigen::MatrixXd evaluate_basis(const KnotVector& knots, std::span<const double> x);

/// D_d^T D_d where D_d is the (M-d) x M d-th order difference operator.
Eigen::MatrixXd difference_penalty(int num_basis, int order);

/// The d-th order difference operator itself.
Eigen::MatrixXd difference_operator(int num_basis, int order);

struct CovariateBlock {
  KnotVector knots;
  Eigen::MatrixXd basis;    // T x M
  Eigen::MatrixXd penalty;  // M x M
};

/// Knots and penalty order: everything needed to rebuild a design for new covariates.
struct DesignSpec {
  std::vector<KnotVector> knots;
  int penalty_order = 2;

  int num_columns() const;
  int num_covariates() const { return static_cast<int>(knots.size()); }
};

struct ColumnRange {
  int offset = 0;
  int size = 0;
};

/// Concatenated basis B = [B_1 | ... | B_p] with block-diagonal penalty.
struct SplineDesign {
  Eigen::MatrixXd basis;  // T x pM
  std::vector<ColumnRange> blocks;
  DesignSpec spec;
  Eigen::MatrixXd penalty;  // pM x pM

  Eigen::Index rows() const { return basis.rows(); }
  Eigen::Index cols() const { return basis.cols(); }

  /// Basis rows for new covariate values (T' x p), clamped to the training range.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& covariates) const;
};

SplineDesign assemble_design(std::vector<CovariateBlock> blocks, int penalty_order);

/// Builds knots, basis and penalty for every column of `covariates` (T x p).
SplineDesign build_design(const Eigen::MatrixXd& covariates, int inner_count, int degree,
                          int penalty_order);

/// Rebuilds a design from a stored spec (knots are reused, not re-estimated).
SplineDesign rebuild_design(const DesignSpec& spec, const Eigen::MatrixXd& covariates);

/// Evaluation grid of `points` rows spanning every covariate's [lo, hi] jointly.
Eigen::MatrixXd covariate_grid(const DesignSpec& spec, int points);

}  // namespace betagam
