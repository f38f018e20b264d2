#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <utility>

namespace betagam {

/// Clipping width applied to observations and fitted means.
inline constexpr double kClipEps = 1e-8;

/// Beyond this |eta| the logistic saturates (exp underflows in double precision).
inline constexpr double kLogisticSaturation = 745.0;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log of a probability. -inf encodes probability zero.
struct LogProb {
  double value = kNegInf;

  static LogProb from_prob(double p) { return {std::log(p)}; }
  double prob() const { return std::exp(value); }
  bool valid() const { return value <= 0.0 && !std::isnan(value); }
};

/// ln Gamma(x) for x > 0. Throws std::domain_error otherwise.
double log_gamma(double x);

/// psi(x) = d/dx ln Gamma(x) for x > 0. Throws std::domain_error otherwise.
double digamma(double x);

struct GammaPair {
  double log_gamma;
  double digamma;
};

/// ln Gamma(x) and psi(x) together, sharing the recurrence shift.
GammaPair log_gamma_digamma(double x);

/// Stable log(sum(exp(v))). Exact -inf when every entry is -inf.
/// Throws std::invalid_argument on empty input.
double log_sum_exp(std::span<const double> values);

/// Two-argument form used in the inner loops of the recursions.
inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == kNegInf) return kNegInf;
  return a + std::log1p(std::exp(b - a));
}

inline double clip_unit(double y, double eps = kClipEps) {
  return std::fmin(std::fmax(y, eps), 1.0 - eps);
}

/// Inverse logit clipped to [eps, 1 - eps], so it stays monotone and inside
/// (0, 1) for every eta; beyond |eta| = 745 it sits on the clipped boundary.
inline double logistic(double eta) {
  if (eta > kLogisticSaturation) return 1.0 - kClipEps;
  if (eta < -kLogisticSaturation) return kClipEps;
  double mu;
  if (eta >= 0.0) {
    mu = 1.0 / (1.0 + std::exp(-eta));
  } else {
    const double e = std::exp(eta);
    mu = e / (1.0 + e);
  }
  return clip_unit(mu);
}

inline double logit(double mu) { return std::log(mu / (1.0 - mu)); }

}  // namespace betagam
