#include "betagam/numkernel.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <string>

namespace betagam {

namespace {

// Arguments below this are shifted upward by the recurrence before the
// asymptotic series is applied.
constexpr double kAsymptoticFrom = 10.0;

double stirling_log_gamma(double z) {
  const double zi = 1.0 / z;
  const double zi2 = zi * zi;
  const double series =
      zi * (1.0 / 12.0 +
            zi2 * (-1.0 / 360.0 +
                   zi2 * (1.0 / 1260.0 +
                          zi2 * (-1.0 / 1680.0 +
                                 zi2 * (1.0 / 1188.0 + zi2 * (-691.0 / 360360.0 + zi2 / 156.0))))));
  return (z - 0.5) * std::log(z) - z + 0.5 * std::log(2.0 * std::numbers::pi) + series;
}

double asymptotic_digamma(double z) {
  const double zi = 1.0 / z;
  const double zi2 = zi * zi;
  const double series =
      zi2 * (1.0 / 12.0 +
             zi2 * (-1.0 / 120.0 +
                    zi2 * (1.0 / 252.0 +
                           zi2 * (-1.0 / 240.0 +
                                  zi2 * (1.0 / 132.0 + zi2 * (-691.0 / 32760.0 + zi2 / 12.0))))));
  return std::log(z) - 0.5 * zi - series;
}

void require_positive(double x, const char* fn) {
  if (!(x > 0.0)) {
    throw std::domain_error(std::string(fn) + ": argument must be positive, got " + std::to_string(x));
  }
}

}  // namespace

double log_gamma(double x) {
  require_positive(x, "log_gamma");
  if (x >= kAsymptoticFrom) return stirling_log_gamma(x);
  double prod = 1.0;
  double z = x;
  while (z < kAsymptoticFrom) {
    prod *= z;
    z += 1.0;
  }
  return stirling_log_gamma(z) - std::log(prod);
}

double digamma(double x) {
  require_positive(x, "digamma");
  double acc = 0.0;
  double z = x;
  while (z < kAsymptoticFrom) {
    acc -= 1.0 / z;
    z += 1.0;
  }
  return acc + asymptotic_digamma(z);
}

GammaPair log_gamma_digamma(double x) {
  require_positive(x, "log_gamma_digamma");
  double prod = 1.0;
  double acc = 0.0;
  double z = x;
  while (z < kAsymptoticFrom) {
    prod *= z;
    acc -= 1.0 / z;
    z += 1.0;
  }
  return {stirling_log_gamma(z) - std::log(prod), acc + asymptotic_digamma(z)};
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double vmax = *std::max_element(values.begin(), values.end());
  if (vmax == kNegInf) return kNegInf;
  if (std::isinf(vmax)) return vmax;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - vmax);
  return vmax + std::log(acc);
}

}  // namespace betagam
