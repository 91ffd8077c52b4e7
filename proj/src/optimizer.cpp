#include "idm/optimizer.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace idm {

namespace {

constexpr double kMaxDamping = 1e16;

// Value at x, or -inf when the point is infeasible.
double try_eval(const ObjectiveFn& f, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  try {
    const double v = f(x, grad);
    if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
    if (grad && !grad->allFinite()) return -std::numeric_limits<double>::infinity();
    return v;
  } catch (const NumericError&) {
    return -std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

Eigen::MatrixXd fd_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                           double rel_step) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd g;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xp = x;
    const double h = rel_step * (1.0 + std::abs(x[i]));
    xp[i] += h;
    f(xp, &g);
    H.col(i) = (g - grad) / h;
  }
  return 0.5 * (H + H.transpose());
}

Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, dn = x;
    up[i] += step;
    dn[i] -= step;
    g[i] = (f(up, nullptr) - f(dn, nullptr)) / (2.0 * step);
  }
  return g;
}

OptimizerResult maximize(const ObjectiveFn& f, const Eigen::VectorXd& x0, const OptimizerOptions& opt) {
  OptimizerResult res;
  res.x = x0;
  res.value = f(res.x, &res.gradient);
  if (!std::isfinite(res.value))
    throw NumericError(fmt::format("objective is {} at the starting point", res.value));
  double damping = opt.initial_damping;
  res.gradient_norm = res.gradient.norm();
  if (opt.trace) opt.trace({0, res.value, res.gradient_norm, damping, true});

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    res.iterations = iter;
    const Eigen::MatrixXd H = fd_hessian(f, res.x, res.gradient, opt.hessian_step);
    const Eigen::MatrixXd A = -H;
    const double scale = std::max(1e-8, A.diagonal().cwiseAbs().mean());
    bool accepted = false;
    double f_new = res.value;
    Eigen::VectorXd x_new, g_new;
    while (damping <= kMaxDamping) {
      Eigen::MatrixXd M = A;
      M.diagonal().array() += damping * scale;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
          (ldlt.vectorD().array() <= 0.0).any()) {
        damping = std::max(damping * 10.0, 1e-10);
        continue;
      }
      const Eigen::VectorXd step = ldlt.solve(res.gradient);
      x_new = res.x + step;
      f_new = try_eval(f, x_new, &g_new);
      if (f_new >= res.value) {
        accepted = true;
        break;
      }
      if (opt.trace) opt.trace({iter, f_new, res.gradient_norm, damping, false});
      damping = std::max(damping * 10.0, 1e-10);
    }
    if (!accepted) {
      // No ascent direction left: stationary to working precision.
      res.hessian = H;
      res.converged = res.gradient_norm <= opt.gradient_tolerance;
      res.status = res.converged ? "converged (no further ascent)" : "stalled";
      if (!res.converged)
        throw ConvergenceError(fmt::format("optimizer stalled after {} iterations with gradient norm {:.3g}",
                                           iter, res.gradient_norm),
                               res.x, res.gradient_norm);
      return res;
    }
    const double delta = f_new - res.value;
    res.x = std::move(x_new);
    res.value = f_new;
    res.gradient = std::move(g_new);
    res.gradient_norm = res.gradient.norm();
    damping = damping / 10.0;
    if (opt.trace) opt.trace({iter, res.value, res.gradient_norm, damping, true});
    if (std::abs(delta) <= opt.objective_tolerance && res.gradient_norm <= opt.gradient_tolerance) {
      res.converged = true;
      res.status = "converged";
      res.hessian = fd_hessian(f, res.x, res.gradient, opt.hessian_step);
      return res;
    }
  }
  throw ConvergenceError(fmt::format("no convergence within {} iterations (gradient norm {:.3g})",
                                     opt.max_iterations, res.gradient_norm),
                         res.x, res.gradient_norm);
}

}  // namespace idm
