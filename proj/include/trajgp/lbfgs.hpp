#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "trajgp/errors.hpp"

namespace trajgp {

// Objective: fills `grad` and returns the cost. May return +inf (or throw
// NumericalError, which the minimizer treats as +inf) to reject a point.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-5;     // convergence: ||grad||_inf < grad_tol
  int history = 8;            // stored curvature pairs
  int max_line_search = 40;   // backtracking halvings per iteration
  double armijo_c1 = 1e-4;
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double fx = std::numeric_limits<double>::infinity();
  double grad_inf_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // cost at the start and after each accepted step
};

// Limited-memory BFGS with two-loop recursion, Armijo backtracking line
// search and box clamping of iterates. Accepted iterates have strictly
// non-increasing cost. Curvature pairs failing s^T y > 0 are skipped so the
// implicit Hessian stays positive definite.
inline LbfgsResult lbfgs_minimize(const Objective& objective,
                                  const Eigen::VectorXd& x0,
                                  const LbfgsOptions& opts = {}) {
  const auto clamp = [&](Eigen::VectorXd v) {
    return v.cwiseMax(opts.lower_bound).cwiseMin(opts.upper_bound).eval();
  };
  const auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad,
                        int& evals) -> double {
    ++evals;
    try {
      const double fx = objective(x, grad);
      return std::isfinite(fx) ? fx : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  LbfgsResult result;
  result.x = clamp(x0);
  Eigen::VectorXd grad(x0.size());
  result.fx = eval(result.x, grad, result.evaluations);
  if (!std::isfinite(result.fx)) {
    throw NumericalError("lbfgs_minimize: objective is not finite at the initial point");
  }
  result.grad_inf_norm = grad.lpNorm<Eigen::Infinity>();
  result.cost_trace.push_back(result.fx);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (result.grad_inf_norm < opts.grad_tol) {
      result.converged = true;
      return result;
    }

    // Two-loop recursion for p = -H grad.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd direction = -q;
    if (direction.dot(grad) >= 0.0) {
      // Not a descent direction (stale curvature); fall back to steepest descent.
      direction = -grad;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty()
                      ? 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>())
                      : 1.0;
    const double directional = direction.dot(grad);

    bool accepted = false;
    Eigen::VectorXd x_new, grad_new(grad.size());
    double fx_new = result.fx;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      x_new = clamp(result.x + step * direction);
      fx_new = eval(x_new, grad_new, result.evaluations);
      // Armijo condition on the actual (clamped) move.
      const double decrease = opts.armijo_c1 * step * directional;
      if (std::isfinite(fx_new) && fx_new <= result.fx + decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No acceptable step along this direction; report the best point found.
      return result;
    }

    Eigen::VectorXd s = x_new - result.x;
    Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    result.x = std::move(x_new);
    result.fx = fx_new;
    grad = grad_new;
    result.grad_inf_norm = grad.lpNorm<Eigen::Infinity>();
    result.iterations = iter + 1;
    result.cost_trace.push_back(result.fx);
  }
  result.converged = result.grad_inf_norm < opts.grad_tol;
  return result;
}

}  // namespace trajgp
