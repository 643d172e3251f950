#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Core>

namespace cdhmm::optim {

/// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BoundedLbfgsOptions {
  std::size_t max_iterations = 100;
  std::size_t memory = 10;
  /// Stop when the projected gradient's max-norm falls below this.
  double pg_tolerance = 1e-5;
  /// Stop when (f_k - f_{k+1}) <= f_tolerance * max(|f_k|, |f_{k+1}|, 1).
  double f_tolerance = 2.2e-9;
  std::size_t max_line_search = 40;
};

struct BoundedLbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Box-constrained limited-memory BFGS. Directions come from the two-loop
/// recursion restricted to the free variables; steps are projected onto the
/// box and accepted under an Armijo condition along the projected path.
BoundedLbfgsResult minimize_bounded(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper, const BoundedLbfgsOptions& options = {});

}  // namespace cdhmm::optim
