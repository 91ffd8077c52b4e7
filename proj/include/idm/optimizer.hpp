#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "idm/error.hpp"

namespace idm {

/// One optimizer iteration, streamed to OptimizerOptions::trace.
struct TraceRecord {
  int iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double damping = 0.0;
  bool accepted = false;
};

struct OptimizerOptions {
  double objective_tolerance = 1e-6;
  double gradient_tolerance = 1e-4;
  int max_iterations = 500;
  double initial_damping = 1e-3;
  /// Relative step of the forward-difference Hessian.
  double hessian_step = 1e-7;
  std::function<void(const TraceRecord&)> trace;
};

/// Objective value; fills the gradient when the pointer is non-null. May
/// throw NumericError for infeasible points, which the optimizer treats as a
/// rejected step.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  /// Hessian of the objective at x.
  Eigen::MatrixXd hessian;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  std::string status;
};

/// Raised when the iteration limit is hit or no ascent step can be found.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, double gradient_norm)
      : Error(what), last_iterate_(std::move(last_iterate)), gradient_norm_(gradient_norm) {}
  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  Eigen::VectorXd last_iterate_;
  double gradient_norm_;
};

/// Symmetrized forward-difference Hessian built from analytic gradients.
Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                           double rel_step);

/// Central-difference gradient of the objective value alone.
Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double step);

/// Maximizes f by Newton steps on the (negated) Hessian damped
/// Levenberg-Marquardt style: the damping shrinks after each accepted ascent
/// step and grows after each rejected one, so accepted steps never lower f.
/// Converges when both |delta f| and the gradient norm fall below tolerance.
OptimizerResult maximize(const ObjectiveFn& f, const Eigen::VectorXd& x0, const OptimizerOptions& opt = {});

}  // namespace idm
