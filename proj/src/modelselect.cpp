#include "betagam/modelselect.hpp"

#include "betagam/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace betagam {

void DiagnosticConfig::validate() const {
  if (!(phi_max > 0.0)) throw std::invalid_argument("DiagnosticConfig: phi_max must be positive");
  if (!(eps_sat >= 0.0)) throw std::invalid_argument("DiagnosticConfig: eps_sat must be non-negative");
  if (s_thresh < 1) throw std::invalid_argument("DiagnosticConfig: s_thresh must be >= 1");
  if (!(delta_abs > 0.0) || !(delta_abs < delta_sum)) {
    throw std::invalid_argument("DiagnosticConfig: need 0 < delta_abs < delta_sum");
  }
  if (!(occupancy_min > 0.0 && occupancy_min < 1.0)) {
    throw std::invalid_argument("DiagnosticConfig: occupancy_min must lie in (0, 1)");
  }
}

Eigen::VectorXd state_occupancy(const Posteriors& posteriors) {
  const Eigen::Index T = posteriors.gamma.rows();
  if (T == 0) return Eigen::VectorXd::Zero(posteriors.gamma.cols());
  return posteriors.gamma.colwise().sum().transpose() / static_cast<double>(T);
}

DiagnosticReport diagnose(std::span<const double> phi_hat, const Eigen::VectorXd& occupancy,
                          const DiagnosticConfig& config) {
  const int K = static_cast<int>(phi_hat.size());
  if (K == 0) throw std::invalid_argument("diagnose: empty precision vector");
  if (occupancy.size() != K) throw std::invalid_argument("diagnose: occupancy size mismatch");
  DiagnosticReport r;
  r.occupancy = occupancy;
  for (const double p : phi_hat) {
    if (p >= config.phi_max - config.eps_sat) ++r.n_sat;
  }
  if (r.n_sat >= config.s_thresh) r.reasons.emplace_back("saturation");

  std::vector<double> sorted(phi_hat.begin(), phi_hat.end());
  std::sort(sorted.begin(), sorted.end());
  const int m = std::min(3, K - 1);
  bool jump = false;
  for (int i = K - m; i <= K - 1; ++i) {
    // Delta_i = phi_(i+1) - phi_(i) in 1-based order statistics.
    const double gap = sorted[static_cast<std::size_t>(i)] - sorted[static_cast<std::size_t>(i - 1)];
    r.tail_deltas.push_back(gap);
    r.delta_tail += gap;
    if (gap > config.delta_abs) jump = true;
  }
  if (jump) r.reasons.emplace_back("tail_jump");
  if (r.delta_tail > config.delta_sum) r.reasons.emplace_back("tail_sum");
  if (occupancy.minCoeff() < config.occupancy_min) r.reasons.emplace_back("occupancy");
  r.flagged = !r.reasons.empty();
  return r;
}

DiagnosticReport diagnose(std::span<const double> phi_hat, const Posteriors& posteriors,
                          const DiagnosticConfig& config) {
  return diagnose(phi_hat, state_occupancy(posteriors), config);
}

EffectiveDof effective_dof(const SplineDesign& design, const Posteriors& posteriors, const ModelParams& params) {
  const int K = params.num_states();
  if (posteriors.gamma.cols() != K || posteriors.gamma.rows() != design.rows()) {
    throw std::invalid_argument("effective_dof: posterior dimensions do not match");
  }
  EffectiveDof out;
  out.per_state.resize(K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd mu = state_means(design.basis, params.states[static_cast<std::size_t>(k)].beta);
    const Eigen::VectorXd w = posteriors.gamma.col(k).array() * mu.array() * (1.0 - mu.array());
    const Eigen::MatrixXd btwb = design.basis.transpose() * w.asDiagonal() * design.basis;
    Eigen::MatrixXd lhs = btwb + params.lambda * design.penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    const double scale = std::max(1.0, lhs.diagonal().cwiseAbs().maxCoeff());
    const auto singular = [&](const Eigen::LDLT<Eigen::MatrixXd>& f) {
      if (f.info() != Eigen::Success) return true;
      const Eigen::VectorXd d = f.vectorD();
      return d.minCoeff() <= 1e-13 * scale;
    };
    if (singular(ldlt)) {
      lhs.diagonal().array() += 1e-10;
      ldlt.compute(lhs);
      out.ridge_used = true;
    }
    const Eigen::MatrixXd h = ldlt.solve(btwb);
    out.per_state[k] = h.trace();
  }
  out.total = out.per_state.sum() + K + static_cast<double>(K) * (K - 1);
  return out;
}

double posterior_entropy(const Eigen::MatrixXd& gamma) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
    for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
      const double g = gamma(i, j);
      if (g > 0.0) h -= g * std::log(g);
    }
  }
  return h;
}

Criteria criteria(double log_likelihood, double nu, double n_obs, double entropy) {
  Criteria c;
  c.aic = -2.0 * log_likelihood + 2.0 * nu;
  c.bic = -2.0 * log_likelihood + nu * std::log(n_obs);
  c.icl = c.bic + 2.0 * std::max(0.0, entropy);
  return c;
}

Criteria criteria(const FitResult& fit, double nu) {
  return criteria(fit.log_likelihood, nu, static_cast<double>(fit.posteriors.gamma.rows()),
                  posterior_entropy(fit.posteriors.gamma));
}

std::optional<Selection> select_model(const std::vector<GridCell>& cells, double bic_tolerance) {
  std::vector<int> ks;
  for (const auto& c : cells) {
    if (!c.diagnostics.flagged) ks.push_back(c.K);
  }
  if (ks.empty()) return std::nullopt;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  Selection sel;
  double bic_min = std::numeric_limits<double>::infinity();
  for (const int K : ks) {
    std::size_t best = cells.size();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.K != K || c.diagnostics.flagged) continue;
      if (best == cells.size() || c.crit.aic < cells[best].crit.aic ||
          (c.crit.aic == cells[best].crit.aic && c.lambda < cells[best].lambda)) {
        best = i;
      }
    }
    sel.per_k.emplace_back(K, best);
    bic_min = std::min(bic_min, cells[best].crit.bic);
  }
  for (const auto& [K, idx] : sel.per_k) {
    if (cells[idx].crit.bic <= bic_min + bic_tolerance) {
      sel.K = K;
      sel.cell = idx;
      sel.lambda = cells[idx].lambda;
    }
  }
  return sel;
}

std::uint64_t cell_seed(std::uint64_t base, int K, std::size_t lambda_index) {
  return derive_seed(derive_seed(base, static_cast<std::uint64_t>(K)), lambda_index);
}

GridCell fit_cell(const Observations& obs, const SplineDesign& design, int K, double lambda,
                  const MultiStartOptions& fit, const DiagnosticConfig& diag) {
  MultiStartResult ms = multi_start_fit(obs, design, K, lambda, fit);
  GridCell cell;
  cell.K = K;
  cell.lambda = lambda;
  cell.log_likelihood = ms.best.log_likelihood;
  cell.nu = effective_dof(design, ms.best.posteriors, ms.best.params).total;
  cell.crit = criteria(ms.best, cell.nu);
  const Eigen::VectorXd phi = ms.best.params.phis();
  cell.diagnostics = diagnose(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())),
                              ms.best.posteriors, diag);
  cell.converged = ms.best.converged;
  cell.fit = std::move(ms.best);
  return cell;
}

GridResult grid_search(const Observations& obs, const SplineDesign& design, const GridOptions& options) {
  if (options.K_set.empty() || options.lambda_set.empty()) {
    throw std::invalid_argument("grid_search: K and lambda sets must be non-empty");
  }
  options.diagnostics.validate();
  const std::size_t nl = options.lambda_set.size();
  GridResult out;
  out.cells.resize(options.K_set.size() * nl);
  auto run_cell = [&](std::size_t i, const std::optional<ModelParams>& warm) {
    const int K = options.K_set[i / nl];
    MultiStartOptions fit = options.fit;
    fit.seed = cell_seed(options.fit.seed, K, i % nl);
    if (warm) fit.warm_start = warm;
    out.cells[i] = fit_cell(obs, design, K, options.lambda_set[i % nl], fit, options.diagnostics);
  };
  if (options.warm_continuation) {
    parallel_for(options.K_set.size(), options.workers, [&](std::size_t k) {
      std::optional<ModelParams> previous;
      for (std::size_t l = 0; l < nl; ++l) {
        run_cell(k * nl + l, previous);
        previous = out.cells[k * nl + l].fit->params;
      }
    });
  } else {
    parallel_for(out.cells.size(), options.workers, [&](std::size_t i) { run_cell(i, std::nullopt); });
  }
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    if (!out.cells[i].diagnostics.flagged) out.valid.push_back(i);
  }
  out.chosen = select_model(out.cells, options.bic_tolerance);
  if (!out.chosen) throw NoValidModelError(std::move(out));
  return out;
}

}  // namespace betagam
