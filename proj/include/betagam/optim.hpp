#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace betagam::optim {

/// Limited-memory BFGS with simple box constraints (unbounded sides are +/-inf).
///
/// Variables sitting on a bound with the gradient pointing outward are held
/// fixed for the iteration; the quasi-Newton direction is built on the free
/// subspace and the step is truncated at the first bound it reaches. The line
/// search enforces the weak Wolfe conditions, so every accepted step strictly
/// decreases the objective.
struct BoxLbfgsOptions {
  int max_iter = 200;
  int memory = 10;
  double pgtol = 1e-6;  // stop when the projected gradient inf-norm drops below this
  double factr = 1e7;   // stop when the relative decrease is below factr * machine eps
  int max_linesearch = 40;
};

enum class BoxLbfgsStatus {
  kGradientConverged,
  kFunctionConverged,
  kIterationLimit,
  kLineSearchFailed,
};

struct BoxLbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double initial_f = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  BoxLbfgsStatus status = BoxLbfgsStatus::kIterationLimit;

  bool converged() const {
    return status == BoxLbfgsStatus::kGradientConverged || status == BoxLbfgsStatus::kFunctionConverged;
  }
};

/// Objective returns f(x) and writes the gradient into its second argument.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

BoxLbfgsResult minimize_box(const Objective& objective, Eigen::VectorXd x0,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                            const BoxLbfgsOptions& options = {});

std::string to_string(BoxLbfgsStatus status);

}  // namespace betagam::optim
