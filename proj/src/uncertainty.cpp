#include "betagam/uncertainty.hpp"

#include "betagam/numkernel.hpp"
#include "betagam/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace betagam {

std::vector<int> sample_chain(const ChainParams& chain, Eigen::Index T, Rng& rng) {
  const int K = chain.num_states();
  std::vector<int> z(static_cast<std::size_t>(T));
  if (T == 0) return z;
  z[0] = rng.categorical(std::span<const double>(chain.pi.data(), static_cast<std::size_t>(K)));
  std::vector<double> row(static_cast<std::size_t>(K));
  for (Eigen::Index t = 1; t < T; ++t) {
    const int prev = z[static_cast<std::size_t>(t - 1)];
    for (int j = 0; j < K; ++j) row[static_cast<std::size_t>(j)] = chain.A(prev, j);
    z[static_cast<std::size_t>(t)] = rng.categorical(row);
  }
  return z;
}

SimulatedSeries simulate_from_model(const ModelParams& params, const SplineDesign& design, Rng& rng) {
  const Eigen::Index T = design.rows();
  SimulatedSeries out;
  out.z = sample_chain(params.chain, T, rng);
  std::vector<Eigen::VectorXd> mu;
  mu.reserve(params.states.size());
  for (const auto& s : params.states) mu.push_back(state_means(design.basis, s.beta));
  out.y.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto k = static_cast<std::size_t>(out.z[static_cast<std::size_t>(t)]);
    const double m = mu[k][t];
    const double phi = params.states[k].phi;
    out.y[t] = clip_unit(rng.beta(m * phi, (1.0 - m) * phi));
  }
  return out;
}

Eigen::MatrixXd mean_curves(const ModelParams& params, const Eigen::MatrixXd& grid_basis) {
  Eigen::MatrixXd curves(grid_basis.rows(), params.num_states());
  for (int k = 0; k < params.num_states(); ++k) {
    curves.col(k) = state_means(grid_basis, params.states[static_cast<std::size_t>(k)].beta);
  }
  return curves;
}

std::vector<int> best_alignment(const Eigen::MatrixXd& candidate_curves, const Eigen::MatrixXd& reference_curves) {
  const auto K = static_cast<int>(reference_curves.cols());
  if (candidate_curves.cols() != K || candidate_curves.rows() != reference_curves.rows()) {
    throw std::invalid_argument("best_alignment: curve dimensions differ");
  }
  // cost(i, j): distance between candidate state i and reference state j.
  Eigen::MatrixXd cost(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) cost(i, j) = (candidate_curves.col(i) - reference_curves.col(j)).squaredNorm();
  }
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int k = 0; k < K; ++k) c += cost(perm[static_cast<std::size_t>(k)], k);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ModelParams align_to_reference(const ModelParams& candidate, const ModelParams& reference, int grid_points) {
  if (candidate.num_states() != reference.num_states()) {
    throw std::invalid_argument("align_to_reference: state counts differ");
  }
  const Eigen::MatrixXd grid = covariate_grid(reference.design, grid_points);
  const Eigen::MatrixXd basis = rebuild_design(reference.design, grid).basis;
  const std::vector<int> order = best_alignment(mean_curves(candidate, basis), mean_curves(reference, basis));
  return permute_states(candidate, order);
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("empirical_quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::size_t> BootstrapEnsemble::valid_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < replicates.size(); ++i) {
    if (replicates[i].valid()) out.push_back(i);
  }
  return out;
}

std::size_t required_valid_replicates(int B) {
  const auto quarter = static_cast<std::size_t>((B + 3) / 4);
  return std::min(static_cast<std::size_t>(std::max(B, 0)), std::max<std::size_t>(10, quarter));
}

BootstrapEnsemble bootstrap_ensemble(const ModelParams& reference, const SplineDesign& design,
                                     const BootstrapOptions& options) {
  if (options.B < 2) throw std::invalid_argument("bootstrap: B must be >= 2");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw std::invalid_argument("bootstrap: alpha must lie in (0, 1)");
  BootstrapEnsemble ens;
  ens.B = options.B;
  ens.base_seed = options.seed;
  ens.replicates.resize(static_cast<std::size_t>(options.B));
  const int K = reference.num_states();

  parallel_for(ens.replicates.size(), options.workers, [&](std::size_t b) {
    BootstrapReplicate& rep = ens.replicates[b];
    rep.index = static_cast<int>(b);
    rep.seed = derive_seed(options.seed, b);
    try {
      Rng rng(rep.seed);
      const SimulatedSeries sim = simulate_from_model(reference, design, rng);
      const Observations obs(sim.y);
      MultiStartOptions ms;
      ms.n_starts = options.n_starts;
      ms.seed = derive_seed(rep.seed, 0x5eedULL);
      ms.workers = 1;
      ms.bounds = reference.bounds;
      ms.em = options.em;
      ms.warm_start = reference;
      const MultiStartResult fit = multi_start_fit(obs, design, K, reference.lambda, ms);
      rep.params = align_to_reference(fit.best.params, reference, options.curve_points);
      rep.converged = fit.best.converged;
      const Eigen::VectorXd phi = rep.params.phis();
      const Eigen::VectorXd occ = state_occupancy(fit.best.posteriors);
      // The filter is label invariant, so the unaligned occupancy can be used.
      rep.degenerate =
          diagnose(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())), occ, options.diagnostics)
              .flagged;
    } catch (const std::exception& e) {
      rep.failed = true;
      rep.error = e.what();
    }
  });
  return ens;
}

IntervalTable percentile_intervals(const BootstrapEnsemble& ensemble, const ModelParams& reference, double alpha,
                                   int curve_points) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bootstrap: alpha must lie in (0, 1)");
  const std::vector<std::size_t> valid = ensemble.valid_indices();
  const std::size_t required = required_valid_replicates(ensemble.B);
  if (valid.size() < required || valid.empty()) throw InsufficientReplicatesError(valid.size(), required);

  IntervalTable table;
  table.n_valid = valid.size();
  const double level = 1.0 - alpha;
  auto add = [&](std::string name, double estimate, const auto& extract) {
    std::vector<double> v;
    v.reserve(valid.size());
    for (const std::size_t i : valid) v.push_back(extract(ensemble.replicates[i].params));
    IntervalRow row;
    row.parameter = std::move(name);
    row.estimate = estimate;
    row.lower = empirical_quantile(v, alpha / 2.0);
    row.upper = empirical_quantile(std::move(v), 1.0 - alpha / 2.0);
    row.level = level;
    row.bias_warning = estimate < row.lower || estimate > row.upper;
    table.rows.push_back(std::move(row));
  };

  const int K = reference.num_states();
  for (int k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    add("phi_" + std::to_string(k + 1), reference.states[ks].phi,
        [ks](const ModelParams& p) { return p.states[ks].phi; });
  }
  for (int k = 0; k < K; ++k) {
    add("pi_" + std::to_string(k + 1), reference.chain.pi[k],
        [k](const ModelParams& p) { return p.chain.pi[k]; });
  }
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      add("A_" + std::to_string(i + 1) + "_" + std::to_string(j + 1), reference.chain.A(i, j),
          [i, j](const ModelParams& p) { return p.chain.A(i, j); });
    }
  }

  const Eigen::MatrixXd grid = covariate_grid(reference.design, curve_points);
  const Eigen::MatrixXd basis = rebuild_design(reference.design, grid).basis;
  const Eigen::MatrixXd ref_curves = mean_curves(reference, basis);
  std::vector<Eigen::MatrixXd> curves;
  curves.reserve(valid.size());
  for (const std::size_t i : valid) curves.push_back(mean_curves(ensemble.replicates[i].params, basis));
  std::vector<double> v(valid.size());
  for (int k = 0; k < K; ++k) {
    for (Eigen::Index g = 0; g < grid.rows(); ++g) {
      for (std::size_t r = 0; r < curves.size(); ++r) v[r] = curves[r](g, k);
      CurveBandRow row;
      row.state = k + 1;
      row.x = grid(g, 0);
      row.mean = ref_curves(g, k);
      row.lower = empirical_quantile(v, alpha / 2.0);
      row.upper = empirical_quantile(v, 1.0 - alpha / 2.0);
      table.curves.push_back(row);
    }
  }
  return table;
}

BootstrapResult bootstrap(const ModelParams& reference, const SplineDesign& design, const BootstrapOptions& options) {
  BootstrapResult out;
  out.ensemble = bootstrap_ensemble(reference, design, options);
  out.table = percentile_intervals(out.ensemble, reference, options.alpha, options.curve_points);
  return out;
}

}  // namespace betagam
