#include "betagam/spline.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace betagam {

KnotVector KnotVector::make(int degree, std::vector<double> inner, double lo, double hi) {
  if (degree < 0) throw std::invalid_argument("KnotVector: negative degree");
  if (!(lo < hi)) throw std::invalid_argument("KnotVector: boundary must satisfy lo < hi");
  double prev = lo;
  for (double k : inner) {
    if (!(k > prev)) throw std::invalid_argument("KnotVector: inner knots must be strictly increasing inside (lo, hi)");
    prev = k;
  }
  if (!inner.empty() && !(inner.back() < hi)) {
    throw std::invalid_argument("KnotVector: inner knots must lie strictly below hi");
  }
  KnotVector kv;
  kv.degree = degree;
  kv.lo = lo;
  kv.hi = hi;
  kv.inner = std::move(inner);
  kv.full.assign(static_cast<std::size_t>(degree + 1), lo);
  kv.full.insert(kv.full.end(), kv.inner.begin(), kv.inner.end());
  kv.full.insert(kv.full.end(), static_cast<std::size_t>(degree + 1), hi);
  return kv;
}

KnotVector build_knots(std::span<const double> x_values, int inner_count, int degree) {
  if (inner_count < 0) throw std::invalid_argument("build_knots: inner_count must be >= 0");
  std::vector<double> sorted(x_values.begin(), x_values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < degree + 2) {
    throw std::invalid_argument("build_knots: need at least " + std::to_string(degree + 2) +
                                " distinct covariate values, got " + std::to_string(uniq.size()));
  }
  const auto n = static_cast<double>(sorted.size());
  std::vector<double> inner;
  inner.reserve(static_cast<std::size_t>(inner_count));
  for (int j = 1; j <= inner_count; ++j) {
    // Linear-interpolation quantile on the order statistics.
    const double h = (n - 1.0) * static_cast<double>(j) / static_cast<double>(inner_count + 1);
    const auto lo_idx = static_cast<std::size_t>(h);
    const auto hi_idx = std::min(lo_idx + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo_idx);
    inner.push_back(sorted[lo_idx] + frac * (sorted[hi_idx] - sorted[lo_idx]));
  }
  return KnotVector::make(degree, std::move(inner), sorted.front(), sorted.back());
}

namespace {

int find_span(const KnotVector& kv, double u) {
  const int n = kv.num_basis() - 1;
  const auto& U = kv.full;
  if (u >= U[static_cast<std::size_t>(n + 1)]) return n;
  int low = kv.degree;
  int high = n + 1;
  int mid = (low + high) / 2;
  while (u < U[static_cast<std::size_t>(mid)] || u >= U[static_cast<std::size_t>(mid + 1)]) {
    if (u < U[static_cast<std::size_t>(mid)]) {
      high = mid;
    } else {
      low = mid;
    }
    mid = (low + high) / 2;
  }
  return mid;
}

// Non-zero basis values N_{span-p..span} at u.
void basis_funs(const KnotVector& kv, int span, double u, std::vector<double>& out,
                std::vector<double>& left, std::vector<double>& right) {
  const int p = kv.degree;
  const auto& U = kv.full;
  out.assign(static_cast<std::size_t>(p + 1), 0.0);
  left.assign(static_cast<std::size_t>(p + 1), 0.0);
  right.assign(static_cast<std::size_t>(p + 1), 0.0);
  out[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - U[static_cast<std::size_t>(span + 1 - j)];
    right[j] = U[static_cast<std::size_t>(span + j)] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

Eigen::MatrixXd evaluate_basis(const KnotVector& knots, std::span<const double> x) {
  const int m = knots.num_basis();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), m);
  std::vector<double> vals, left, right;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double u = std::clamp(x[t], knots.lo, knots.hi);
    const int span = find_span(knots, u);
    basis_funs(knots, span, u, vals, left, right);
    for (int r = 0; r <= knots.degree; ++r) {
      out(static_cast<Eigen::Index>(t), span - knots.degree + r) = vals[static_cast<std::size_t>(r)];
    }
  }
  return out;
}

Eigen::MatrixXd difference_operator(int num_basis, int order) {
  if (order < 1 || order >= num_basis) {
    throw std::invalid_argument("difference_penalty: need 1 <= d < M (d=" + std::to_string(order) +
                                ", M=" + std::to_string(num_basis) + ")");
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
  for (int k = 0; k < order; ++k) {
    d = (d.topRows(d.rows() - 1) - d.bottomRows(d.rows() - 1)).eval();
  }
  return d;
}

Eigen::MatrixXd difference_penalty(int num_basis, int order) {
  const Eigen::MatrixXd d = difference_operator(num_basis, order);
  return d.transpose() * d;
}

int DesignSpec::num_columns() const {
  int total = 0;
  for (const auto& k : knots) total += k.num_basis();
  return total;
}

SplineDesign assemble_design(std::vector<CovariateBlock> blocks, int penalty_order) {
  if (blocks.empty()) throw std::invalid_argument("assemble_design: no covariate blocks");
  const Eigen::Index rows = blocks.front().basis.rows();
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    if (b.basis.rows() != rows) throw std::invalid_argument("assemble_design: basis row counts differ");
    if (b.penalty.rows() != b.basis.cols() || b.penalty.cols() != b.basis.cols()) {
      throw std::invalid_argument("assemble_design: penalty shape does not match its basis");
    }
    cols += b.basis.cols();
  }
  SplineDesign design;
  design.basis.resize(rows, cols);
  design.penalty = Eigen::MatrixXd::Zero(cols, cols);
  design.spec.penalty_order = penalty_order;
  Eigen::Index offset = 0;
  for (auto& b : blocks) {
    const Eigen::Index m = b.basis.cols();
    design.basis.middleCols(offset, m) = b.basis;
    design.penalty.block(offset, offset, m, m) = b.penalty;
    design.blocks.push_back({static_cast<int>(offset), static_cast<int>(m)});
    design.spec.knots.push_back(std::move(b.knots));
    offset += m;
  }
  return design;
}

SplineDesign build_design(const Eigen::MatrixXd& covariates, int inner_count, int degree,
                          int penalty_order) {
  std::vector<CovariateBlock> blocks;
  for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
    const Eigen::VectorXd col = covariates.col(j);
    std::span<const double> xs(col.data(), static_cast<std::size_t>(col.size()));
    CovariateBlock block;
    block.knots = build_knots(xs, inner_count, degree);
    block.basis = evaluate_basis(block.knots, xs);
    block.penalty = difference_penalty(block.knots.num_basis(), penalty_order);
    blocks.push_back(std::move(block));
  }
  return assemble_design(std::move(blocks), penalty_order);
}

SplineDesign rebuild_design(const DesignSpec& spec, const Eigen::MatrixXd& covariates) {
  if (covariates.cols() != spec.num_covariates()) {
    throw std::invalid_argument("rebuild_design: covariate count does not match the stored knots");
  }
  std::vector<CovariateBlock> blocks;
  for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
    const Eigen::VectorXd col = covariates.col(j);
    CovariateBlock block;
    block.knots = spec.knots[static_cast<std::size_t>(j)];
    block.basis = evaluate_basis(block.knots, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    block.penalty = difference_penalty(block.knots.num_basis(), spec.penalty_order);
    blocks.push_back(std::move(block));
  }
  return assemble_design(std::move(blocks), spec.penalty_order);
}

Eigen::MatrixXd SplineDesign::evaluate(const Eigen::MatrixXd& covariates) const {
  return rebuild_design(spec, covariates).basis;
}

Eigen::MatrixXd covariate_grid(const DesignSpec& spec, int points) {
  Eigen::MatrixXd grid(points, spec.num_covariates());
  for (int j = 0; j < spec.num_covariates(); ++j) {
    const auto& kv = spec.knots[static_cast<std::size_t>(j)];
    grid.col(j) = Eigen::VectorXd::LinSpaced(points, kv.lo, kv.hi);
  }
  return grid;
}

}  // namespace betagam
