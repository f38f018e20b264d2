#include "betagam/emfit.hpp"

#include "betagam/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace betagam {

Eigen::VectorXd ModelParams::phis() const {
  Eigen::VectorXd out(num_states());
  for (int k = 0; k < num_states(); ++k) out[k] = states[static_cast<std::size_t>(k)].phi;
  return out;
}

MStepResult m_step_state(const Observations& obs, const Eigen::VectorXd& weights, const SplineDesign& design,
                         const StateEmission& init, double lambda, const PhiBounds& bounds,
                         const optim::BoxLbfgsOptions& options) {
  MStepResult out;
  out.state = init;
  out.state.phi = bounds.clamp(init.phi);
  if (!(weights.sum() > 0.0)) {
    out.objective_before = out.objective_after = penalized_objective(obs, weights, design, out.state, lambda);
    return out;
  }

  const Eigen::Index n = init.beta.size();
  Eigen::VectorXd x0(n + 1);
  x0.head(n) = init.beta;
  x0[n] = std::log(out.state.phi);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(n + 1, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(n + 1, std::numeric_limits<double>::infinity());
  lower[n] = bounds.log_min();
  upper[n] = bounds.log_max();

  auto negative_q = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const ObjectiveWithGradient r =
        penalized_objective_and_gradient(obs, weights, design, x.head(n), x[n], lambda);
    grad = -r.gradient;
    return -r.value;
  };
  const optim::BoxLbfgsResult res = optim::minimize_box(negative_q, x0, lower, upper, options);
  out.iterations = res.iterations;
  out.objective_before = -res.initial_f;
  if (!(res.f < res.initial_f)) {
    out.objective_after = out.objective_before;
    out.warning = res.status == optim::BoxLbfgsStatus::kLineSearchFailed;
    return out;
  }
  out.state.beta = res.x.head(n);
  out.state.phi = bounds.clamp(std::exp(res.x[n]));
  out.objective_after = -res.f;
  return out;
}

double roughness_penalty(const ModelParams& params, const SplineDesign& design) {
  double acc = 0.0;
  for (const auto& s : params.states) acc += s.beta.dot(design.penalty * s.beta);
  return params.lambda * acc;
}

std::vector<int> canonical_order(const ModelParams& params, const SplineDesign& design) {
  const int K = params.num_states();
  std::vector<double> level(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    level[static_cast<std::size_t>(k)] = state_means(design.basis, params.states[static_cast<std::size_t>(k)].beta).mean();
  }
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = params.states[static_cast<std::size_t>(a)].phi;
    const double pb = params.states[static_cast<std::size_t>(b)].phi;
    if (pa != pb) return pa < pb;
    return level[static_cast<std::size_t>(a)] < level[static_cast<std::size_t>(b)];
  });
  return order;
}

ModelParams permute_states(const ModelParams& params, const std::vector<int>& order) {
  const int K = params.num_states();
  if (static_cast<int>(order.size()) != K) throw std::invalid_argument("permute_states: order size mismatch");
  ModelParams out = params;
  for (int i = 0; i < K; ++i) {
    const int oi = order[static_cast<std::size_t>(i)];
    out.states[static_cast<std::size_t>(i)] = params.states[static_cast<std::size_t>(oi)];
    out.chain.pi[i] = params.chain.pi[oi];
    for (int j = 0; j < K; ++j) out.chain.A(i, j) = params.chain.A(oi, order[static_cast<std::size_t>(j)]);
  }
  return out;
}

ModelParams initialize_params(const Observations& obs, const SplineDesign& design, int num_states, double lambda,
                              const PhiBounds& bounds, Rng& rng) {
  const Eigen::Index T = obs.size();
  if (num_states < 1) throw std::invalid_argument("initialize_params: K must be >= 1");
  if (T < 5 * static_cast<Eigen::Index>(num_states)) {
    throw std::invalid_argument("initialize_params: need T >= 5K observations");
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(T));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return obs.y()[a] < obs.y()[b]; });

  ModelParams params;
  params.design = design.spec;
  params.lambda = lambda;
  params.bounds = bounds;
  const int p = std::max(1, design.spec.num_covariates());
  for (int k = 0; k < num_states; ++k) {
    const auto begin = static_cast<std::size_t>(k * T / num_states);
    const auto end = static_cast<std::size_t>((k + 1) * T / num_states);
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += obs.y()[idx[i]];
    mean /= static_cast<double>(end - begin);
    double var = 0.0;
    for (std::size_t i = begin; i < end; ++i) var += (obs.y()[idx[i]] - mean) * (obs.y()[idx[i]] - mean);
    var /= static_cast<double>(end - begin);
    const double mom = var > 0.0 ? mean * (1.0 - mean) / var - 1.0 : bounds.max;
    const double level = logit(clip_unit(mean)) + rng.normal(0.0, 0.1);
    StateEmission s;
    s.beta = Eigen::VectorXd::Constant(design.cols(), level / p);
    s.phi = bounds.clamp(bounds.clamp(mom) * std::exp(rng.normal(0.0, 0.25)));
    params.states.push_back(std::move(s));
  }
  params.chain.pi = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  params.chain.A = 0.9 * Eigen::MatrixXd::Identity(num_states, num_states) +
                   Eigen::MatrixXd::Constant(num_states, num_states, 0.1 / num_states);
  for (int i = 0; i < num_states; ++i) params.chain.A.row(i) /= params.chain.A.row(i).sum();
  return params;
}

ModelParams initialize_block_cluster(const Observations& obs, const SplineDesign& design, int num_states,
                                     double lambda, const PhiBounds& bounds, Rng& rng, int block) {
  const Eigen::Index T = obs.size();
  const int K = num_states;
  if (K < 1) throw std::invalid_argument("initialize_block_cluster: K must be >= 1");
  if (T < 5 * static_cast<Eigen::Index>(K)) {
    throw std::invalid_argument("initialize_block_cluster: need T >= 5K observations");
  }
  if (block < 1) throw std::invalid_argument("initialize_block_cluster: block must be >= 1");
  const Eigen::Index nb = (T + block - 1) / block;
  const Eigen::Index M = design.cols();
  const Eigen::MatrixXd& B = design.basis;

  Eigen::VectorXd eta(T);
  for (Eigen::Index t = 0; t < T; ++t) eta[t] = logit(clip_unit(obs.y()[t], 1e-3));

  std::vector<int> label(static_cast<std::size_t>(nb));
  for (auto& l : label) l = std::min(K - 1, static_cast<int>(rng.uniform() * K));

  std::vector<Eigen::VectorXd> beta(static_cast<std::size_t>(K), Eigen::VectorXd::Zero(M));
  std::vector<double> sigma2(static_cast<std::size_t>(K), 1.0);
  const Eigen::MatrixXd reg = lambda * design.penalty + 1e-6 * Eigen::MatrixXd::Identity(M, M);

  for (int iter = 0; iter < 50; ++iter) {
    std::vector<Eigen::MatrixXd> gram(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(M, M));
    std::vector<Eigen::VectorXd> rhs(static_cast<std::size_t>(K), Eigen::VectorXd::Zero(M));
    std::vector<Eigen::Index> count(static_cast<std::size_t>(K), 0);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto k = static_cast<std::size_t>(label[static_cast<std::size_t>(t / block)]);
      gram[k].selfadjointView<Eigen::Lower>().rankUpdate(B.row(t).transpose());
      rhs[k] += eta[t] * B.row(t).transpose();
      ++count[k];
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
      if (count[k] == 0) continue;  // keeps its previous curve
      const Eigen::MatrixXd lhs = Eigen::MatrixXd(gram[k].selfadjointView<Eigen::Lower>()) + reg;
      beta[k] = lhs.ldlt().solve(rhs[k]);
    }
    std::vector<double> sse(static_cast<std::size_t>(K), 0.0);
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto k = static_cast<std::size_t>(label[static_cast<std::size_t>(t / block)]);
      const double r = eta[t] - B.row(t).dot(beta[k]);
      sse[k] += r * r;
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
      if (count[k] > 0) sigma2[k] = std::max(1e-6, sse[k] / static_cast<double>(count[k]));
    }

    bool changed = false;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const Eigen::Index begin = b * block;
      const Eigen::Index end = std::min(T, begin + block);
      int best = 0;
      double best_cost = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        double cost = 0.0;
        for (Eigen::Index t = begin; t < end; ++t) {
          const double r = eta[t] - B.row(t).dot(beta[static_cast<std::size_t>(k)]);
          cost += r * r / sigma2[static_cast<std::size_t>(k)] + std::log(sigma2[static_cast<std::size_t>(k)]);
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = k;
        }
      }
      if (label[static_cast<std::size_t>(b)] != best) {
        label[static_cast<std::size_t>(b)] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }

  ModelParams params;
  params.design = design.spec;
  params.lambda = lambda;
  params.bounds = bounds;
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd mu = state_means(B, beta[static_cast<std::size_t>(k)]);
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (label[static_cast<std::size_t>(t / block)] != k) continue;
      num += mu[t] * (1.0 - mu[t]);
      den += (obs.y()[t] - mu[t]) * (obs.y()[t] - mu[t]);
    }
    StateEmission s;
    s.beta = beta[static_cast<std::size_t>(k)];
    s.phi = den > 0.0 ? bounds.clamp(num / den - 1.0) : bounds.max;
    params.states.push_back(std::move(s));
  }
  params.chain.pi = Eigen::VectorXd::Constant(K, 1.0 / K);
  params.chain.A = 0.9 * Eigen::MatrixXd::Identity(K, K) + Eigen::MatrixXd::Constant(K, K, 0.1 / K);
  for (int i = 0; i < K; ++i) params.chain.A.row(i) /= params.chain.A.row(i).sum();
  return params;
}

FitResult evaluate_params(const Observations& obs, const SplineDesign& design, const ModelParams& params) {
  FitResult fit;
  fit.params = params;
  const Eigen::MatrixXd log_em = log_density_matrix(obs, design, params.states);
  fit.posteriors = forward_backward(log_em, params.chain);
  fit.log_likelihood = fit.posteriors.log_likelihood;
  if (!std::isfinite(fit.log_likelihood)) throw std::runtime_error("em_fit: non-finite log-likelihood");
  fit.penalized_log_likelihood = fit.log_likelihood - roughness_penalty(params, design);
  return fit;
}

FitResult em_fit(const Observations& obs, const SplineDesign& design, const ModelParams& init,
                 const EmOptions& options) {
  const int K = init.num_states();
  if (K < 1) throw std::invalid_argument("em_fit: no states");
  if (obs.size() < K) throw std::invalid_argument("em_fit: need T >= K");
  if (design.rows() != obs.size()) throw std::invalid_argument("em_fit: design rows do not match observations");
  init.chain.validate(1e-8);

  ModelParams params = init;
  for (auto& s : params.states) {
    if (s.beta.size() != design.cols()) throw std::invalid_argument("em_fit: coefficient length mismatch");
    s.phi = params.bounds.clamp(s.phi);
  }

  FitResult fit;
  for (int iter = 0;; ++iter) {
    FitResult current = evaluate_params(obs, design, params);
    const double pll = current.penalized_log_likelihood;
    bool converged = false;
    if (!fit.ll_trace.empty()) {
      const double prev = fit.ll_trace.back();
      if (pll < prev - options.monotone_tol) ++fit.monotonicity_violations;
      converged = std::abs(pll - prev) < options.tol * (1.0 + std::abs(pll));
    }
    fit.ll_trace.push_back(pll);
    if (converged || iter >= options.max_iter) {
      fit.converged = converged;
      break;
    }

    params.chain = update_chain(current.posteriors).chain;
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd weights = current.posteriors.gamma.col(k);
      const MStepResult m = m_step_state(obs, weights, design, params.states[static_cast<std::size_t>(k)],
                                         params.lambda, params.bounds, options.inner);
      if (m.warning) ++fit.m_step_warnings;
      params.states[static_cast<std::size_t>(k)] = m.state;
    }
    ++fit.n_iter;
  }

  // Canonical labels; the E-step is redone so the stored posteriors and
  // likelihood are exactly those of the stored parameters.
  const FitResult relabeled = evaluate_params(obs, design, permute_states(params, canonical_order(params, design)));
  fit.params = relabeled.params;
  fit.posteriors = relabeled.posteriors;
  fit.log_likelihood = relabeled.log_likelihood;
  fit.penalized_log_likelihood = relabeled.penalized_log_likelihood;
  return fit;
}

std::uint64_t start_seed(std::uint64_t base, int index) {
  return derive_seed(base, static_cast<std::uint64_t>(index));
}

MultiStartResult multi_start_fit(const Observations& obs, const SplineDesign& design, int num_states, double lambda,
                                 const MultiStartOptions& options) {
  if (options.n_starts < 1 && !options.warm_start) throw std::invalid_argument("multi_start_fit: n_starts must be >= 1");
  const int offset = options.warm_start ? 1 : 0;
  const auto total = static_cast<std::size_t>(options.n_starts + offset);
  std::vector<std::optional<FitResult>> fits(total);

  parallel_for(total, options.workers, [&](std::size_t i) {
    try {
      ModelParams init;
      std::uint64_t seed = options.seed;
      if (offset == 1 && i == 0) {
        init = *options.warm_start;
        init.lambda = lambda;
        init.bounds = options.bounds;
        init.design = design.spec;
      } else {
        const int index = static_cast<int>(i) - offset;
        seed = start_seed(options.seed, index);
        Rng rng(seed);
        const bool quantile = options.init == InitStrategy::kQuantileSlice ||
                              (options.init == InitStrategy::kMixed && index == 0);
        init = quantile ? initialize_params(obs, design, num_states, lambda, options.bounds, rng)
                        : initialize_block_cluster(obs, design, num_states, lambda, options.bounds, rng);
      }
      FitResult f = em_fit(obs, design, init, options.em);
      f.seed = seed;
      fits[i] = std::move(f);
    } catch (const std::exception&) {
      fits[i].reset();
    }
  });

  MultiStartResult out;
  out.start_penalized_ll.assign(total, std::numeric_limits<double>::quiet_NaN());
  out.start_converged.assign(total, false);
  int best = -1;
  std::vector<double> ok;
  for (std::size_t i = 0; i < total; ++i) {
    if (!fits[i]) {
      ++out.failed_starts;
      continue;
    }
    const double v = fits[i]->penalized_log_likelihood;
    out.start_penalized_ll[i] = v;
    out.start_converged[i] = fits[i]->converged;
    ok.push_back(v);
    if (best < 0 || v > fits[static_cast<std::size_t>(best)]->penalized_log_likelihood) best = static_cast<int>(i);
  }
  if (best < 0) throw std::runtime_error("multi_start_fit: every start failed");
  std::sort(ok.begin(), ok.end());
  const std::size_t m = ok.size();
  const double median = m % 2 == 1 ? ok[m / 2] : 0.5 * (ok[m / 2 - 1] + ok[m / 2]);
  out.best_index = best;
  out.best = std::move(*fits[static_cast<std::size_t>(best)]);
  out.best_median_gap = out.best.penalized_log_likelihood - median;
  return out;
}

}  // namespace betagam
