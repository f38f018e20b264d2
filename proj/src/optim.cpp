#include "betagam/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace betagam::optim {

namespace {

constexpr double kMachEps = std::numeric_limits<double>::epsilon();
constexpr double kArmijo = 1e-4;
constexpr double kWolfe = 0.9;

struct CorrectionPair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// Variables that may move this iteration.
Eigen::ArrayXd free_mask(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi) {
  Eigen::ArrayXd mask = Eigen::ArrayXd::Ones(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) mask[i] = 0.0;
  }
  return mask;
}

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
  double norm = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    // Distance moved by a unit projected steepest-descent step, as in L-BFGS-B.
    const double step = std::clamp(x[i] - g[i], lo[i], hi[i]) - x[i];
    norm = std::max(norm, std::abs(step));
  }
  return norm;
}

Eigen::VectorXd two_loop(const Eigen::VectorXd& g, const Eigen::ArrayXd& mask,
                         const std::deque<CorrectionPair>& pairs) {
  Eigen::VectorXd q = (g.array() * mask).matrix();
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    const auto& p = pairs[k];
    alpha[k] = p.rho * (p.s.array() * mask).matrix().dot(q);
    q -= alpha[k] * (p.y.array() * mask).matrix();
  }
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    const Eigen::VectorXd ym = (last.y.array() * mask).matrix();
    const double yy = ym.squaredNorm();
    const double sy = (last.s.array() * mask).matrix().dot(ym);
    if (yy > 0.0 && sy > 0.0) q *= sy / yy;
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const double b = p.rho * (p.y.array() * mask).matrix().dot(q);
    q += (alpha[k] - b) * (p.s.array() * mask).matrix();
  }
  return -q;
}

}  // namespace

std::string to_string(BoxLbfgsStatus status) {
  switch (status) {
    case BoxLbfgsStatus::kGradientConverged: return "projected gradient below tolerance";
    case BoxLbfgsStatus::kFunctionConverged: return "relative reduction below tolerance";
    case BoxLbfgsStatus::kIterationLimit: return "iteration limit reached";
    case BoxLbfgsStatus::kLineSearchFailed: return "line search failed";
  }
  return "unknown";
}

BoxLbfgsResult minimize_box(const Objective& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, const BoxLbfgsOptions& options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("minimize_box: bound size mismatch");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("minimize_box: lower > upper");

  BoxLbfgsResult res;
  res.x = x0.cwiseMax(lower).cwiseMin(upper);
  res.gradient.resize(n);
  res.f = objective(res.x, res.gradient);
  res.evaluations = 1;
  res.initial_f = res.f;
  if (!std::isfinite(res.f) || !res.gradient.allFinite()) {
    throw std::runtime_error("minimize_box: objective is not finite at the starting point");
  }

  std::deque<CorrectionPair> pairs;
  Eigen::VectorXd x_trial(n);
  Eigen::VectorXd g_trial(n);

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    if (projected_gradient_norm(res.x, res.gradient, lower, upper) < options.pgtol) {
      res.status = BoxLbfgsStatus::kGradientConverged;
      return res;
    }

    Eigen::ArrayXd mask = free_mask(res.x, res.gradient, lower, upper);
    Eigen::VectorXd d = two_loop(res.gradient, mask, pairs);
    double slope = res.gradient.dot(d);
    if (!(slope < 0.0)) {
      pairs.clear();
      d = -(res.gradient.array() * mask).matrix();
      slope = res.gradient.dot(d);
    }

    // Longest feasible step; free variables already on a bound and pointing
    // outward are dropped from the direction.
    double alpha_max = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d[i] < 0.0 && std::isfinite(lower[i])) {
        if (res.x[i] <= lower[i]) {
          d[i] = 0.0;
        } else {
          alpha_max = std::min(alpha_max, (lower[i] - res.x[i]) / d[i]);
        }
      } else if (d[i] > 0.0 && std::isfinite(upper[i])) {
        if (res.x[i] >= upper[i]) {
          d[i] = 0.0;
        } else {
          alpha_max = std::min(alpha_max, (upper[i] - res.x[i]) / d[i]);
        }
      }
    }
    slope = res.gradient.dot(d);
    if (!(slope < 0.0)) {
      res.status = BoxLbfgsStatus::kGradientConverged;
      return res;
    }

    double alpha = pairs.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;
    alpha = std::min(alpha, alpha_max);
    double lo_step = 0.0;
    double hi_step = std::numeric_limits<double>::infinity();
    bool accepted = false;
    double f_trial = 0.0;

    // Best point meeting the sufficient-decrease condition, used if the
    // curvature condition is never met.
    bool have_fallback = false;
    double f_fallback = 0.0;
    Eigen::VectorXd x_fallback, g_fallback;

    for (int ls = 0; ls < options.max_linesearch; ++ls) {
      x_trial = res.x + alpha * d;
      if (alpha >= alpha_max) {
        for (Eigen::Index i = 0; i < n; ++i) {
          if (d[i] < 0.0 && (lower[i] - res.x[i]) / d[i] <= alpha) x_trial[i] = lower[i];
          if (d[i] > 0.0 && (upper[i] - res.x[i]) / d[i] <= alpha) x_trial[i] = upper[i];
        }
      }
      x_trial = x_trial.cwiseMax(lower).cwiseMin(upper);
      f_trial = objective(x_trial, g_trial);
      ++res.evaluations;

      if (!std::isfinite(f_trial) || !g_trial.allFinite() || f_trial > res.f + kArmijo * alpha * slope) {
        hi_step = alpha;
        alpha = 0.5 * (lo_step + hi_step);
        continue;
      }
      if (!have_fallback || f_trial < f_fallback) {
        have_fallback = true;
        f_fallback = f_trial;
        x_fallback = x_trial;
        g_fallback = g_trial;
      }
      if (g_trial.dot(d) < kWolfe * slope && alpha < alpha_max) {
        lo_step = alpha;
        alpha = std::isfinite(hi_step) ? 0.5 * (lo_step + hi_step) : std::min(2.0 * alpha, alpha_max);
        continue;
      }
      accepted = true;
      break;
    }
    if (!accepted) {
      if (!have_fallback || !(f_fallback < res.f)) {
        res.status = BoxLbfgsStatus::kLineSearchFailed;
        return res;
      }
      x_trial = x_fallback;
      g_trial = g_fallback;
      f_trial = f_fallback;
    }

    const Eigen::VectorXd s = x_trial - res.x;
    const Eigen::VectorXd y = g_trial - res.gradient;
    const double sy = s.dot(y);
    if (sy > kMachEps * y.squaredNorm()) {
      pairs.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(pairs.size()) > options.memory) pairs.pop_front();
    }

    const double f_prev = res.f;
    res.x = x_trial;
    res.f = f_trial;
    res.gradient = g_trial;
    const double scale = std::max({std::abs(f_prev), std::abs(res.f), 1.0});
    if (f_prev - res.f <= options.factr * kMachEps * scale) {
      ++res.iterations;
      res.status = BoxLbfgsStatus::kFunctionConverged;
      return res;
    }
  }
  res.status = projected_gradient_norm(res.x, res.gradient, lower, upper) < options.pgtol
                   ? BoxLbfgsStatus::kGradientConverged
                   : BoxLbfgsStatus::kIterationLimit;
  return res;
}

}  // namespace betagam::optim
