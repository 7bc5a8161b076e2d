#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/kernels.hpp"
#include "trajgp/lbfgs.hpp"
#include "trajgp/linalg.hpp"

namespace trajgp {

// Ordered positive hyperparameters of one kernel family, noise variance
// first. Everything is stored as a variance (not a standard deviation):
//   SE:              [noise_var, sigma_sq, length]
//   local-periodic:  [noise_var, sigma_sq, period_scale, decay_scale]
//                    (the period itself is fixed, carried separately)
//   composite:       [noise_var, sigma_sq, decay_scale,
//                     cluster_sigma_sq, cluster_length]
struct HyperParamVector {
  KernelFamily family = KernelFamily::SquaredExponential;
  std::vector<double> values;
  double period = 0.0;  // local-periodic only

  static HyperParamVector se(double noise_var, double sigma_sq, double length) {
    return {KernelFamily::SquaredExponential, {noise_var, sigma_sq, length}, 0.0};
  }
  static HyperParamVector local_periodic(double noise_var, double sigma_sq,
                                         double period_scale, double decay_scale,
                                         double period) {
    return {KernelFamily::LocalPeriodic,
            {noise_var, sigma_sq, period_scale, decay_scale},
            period};
  }
  static HyperParamVector composite(double noise_var, double sigma_sq,
                                    double decay_scale, double cluster_sigma_sq,
                                    double cluster_length) {
    return {KernelFamily::CompositeCluster,
            {noise_var, sigma_sq, decay_scale, cluster_sigma_sq, cluster_length},
            0.0};
  }

  std::size_t expected_size() const {
    switch (family) {
      case KernelFamily::SquaredExponential: return 3;
      case KernelFamily::LocalPeriodic: return 4;
      case KernelFamily::CompositeCluster: return 5;
    }
    throw InvalidInputError("unknown kernel family");
  }

  // Length-scale slots per family (the rest are variances, which may be 0
  // so degenerate kernels remain expressible; length scales must be > 0).
  std::vector<std::size_t> scale_slots() const {
    switch (family) {
      case KernelFamily::SquaredExponential: return {2};
      case KernelFamily::LocalPeriodic: return {2, 3};
      case KernelFamily::CompositeCluster: return {2, 4};
    }
    throw InvalidInputError("unknown kernel family");
  }

  void validate() const {
    if (values.size() != expected_size()) {
      throw InvalidInputError("hyperparameter vector has " +
                              std::to_string(values.size()) +
                              " entries, expected " +
                              std::to_string(expected_size()) + " for family " +
                              to_string(family));
    }
    for (double v : values) {
      if (!(std::isfinite(v) && v >= 0.0)) {
        throw InvalidInputError("hyperparameters must be finite and >= 0");
      }
    }
    for (std::size_t slot : scale_slots()) {
      if (!(values[slot] > 0.0)) {
        throw InvalidInputError("kernel length scales must be > 0");
      }
    }
    if (family == KernelFamily::LocalPeriodic &&
        !(std::isfinite(period) && period > 0.0)) {
      throw InvalidInputError("local-periodic hyperparameters need a period > 0");
    }
  }

  double noise_var() const { return values.at(0); }

  KernelSpec kernel() const {
    validate();
    switch (family) {
      case KernelFamily::SquaredExponential:
        return KernelSpec(SEParams{values[1], values[2]});
      case KernelFamily::LocalPeriodic:
        return KernelSpec(LocalPeriodicParams{values[1], values[2], values[3], period});
      case KernelFamily::CompositeCluster:
        return KernelSpec(CompositeClusterParams{SEParams{values[1], values[2]},
                                                 SEParams{values[3], values[4]}});
    }
    throw InvalidInputError("unknown kernel family");
  }

  std::vector<std::string> names() const {
    switch (family) {
      case KernelFamily::SquaredExponential:
        return {"noise_var", "sigma_sq", "length"};
      case KernelFamily::LocalPeriodic:
        return {"noise_var", "sigma_sq", "period_scale", "decay_scale"};
      case KernelFamily::CompositeCluster:
        return {"noise_var", "sigma_sq", "decay_scale", "cluster_sigma_sq",
                "cluster_length"};
    }
    throw InvalidInputError("unknown kernel family");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"family", to_string(family)}, {"values", values}};
    if (family == KernelFamily::LocalPeriodic) {
      j["period"] = period;
    }
    return j;
  }

  static HyperParamVector from_json(const nlohmann::json& j) {
    try {
      HyperParamVector theta;
      theta.family = kernel_family_from_string(j.at("family").get<std::string>());
      theta.values = j.at("values").get<std::vector<double>>();
      if (theta.family == KernelFamily::LocalPeriodic) {
        theta.period = j.at("period").get<double>();
      }
      theta.validate();
      return theta;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid hyperparameter JSON: ") + e.what());
    }
  }
};

struct CostGrad {
  double cost = 0.0;
  Eigen::VectorXd grad;
};

// Negative log marginal likelihood (up to constants) and its analytic
// gradient:
//   cost    = r^T C^-1 r + ln|C|,  r = targets - mean
//   d/dθ_i  = tr{ [C^-1 - alpha alpha^T] dC/dθ_i },  alpha = C^-1 r
inline CostGrad cost_and_grad(const HyperParamVector& theta,
                              const Eigen::VectorXd& inputs,
                              const Eigen::VectorXd& targets,
                              double mean_const = 0.0) {
  theta.validate();
  if (inputs.size() != targets.size() || inputs.size() < 2) {
    throw InvalidInputError("cost_and_grad: need at least 2 training points");
  }
  const KernelSpec spec = theta.kernel();
  const Eigen::MatrixXd c = spec.gram(inputs, theta.noise_var());
  const CholeskyFactor chol = cholesky_with_jitter(c, spec.diag_value());

  const Eigen::VectorXd residual =
      targets - Eigen::VectorXd::Constant(targets.size(), mean_const);
  const Eigen::VectorXd alpha = chol.solve(residual);

  CostGrad out;
  out.cost = alpha.dot(residual) + chol.log_det();

  // tr(A * G) with both A and G symmetric equals the elementwise sum of
  // A .* G, so each gradient entry costs O(n^2).
  const Eigen::MatrixXd a =
      chol.inverse() - alpha * alpha.transpose();
  const int n_params = spec.gradient_count();
  out.grad.resize(n_params);
  for (int i = 0; i < n_params; ++i) {
    out.grad[i] = a.cwiseProduct(spec.gram_grad(inputs, i)).sum();
  }
  return out;
}

struct OptimizeOptions {
  int max_iter = 200;
  double tol = 1e-5;       // convergence on ||grad||_inf in log space
  int restarts = 4;        // perturbed restarts in addition to the plain init
  unsigned seed = 0;       // seeds the restart perturbations
  double log_bound = 12.0; // log-parameters clamped to [-12, 12]
};

struct RestartSummary {
  int restart = 0;  // 0 is the unperturbed init
  std::vector<double> init_values;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

struct OptimizeResult {
  HyperParamVector theta;
  double cost = std::numeric_limits<double>::infinity();
  double grad_inf_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  int winning_restart = 0;
  std::vector<RestartSummary> restarts;

  nlohmann::json convergence_log() const {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : restarts) {
      runs.push_back({{"restart", r.restart},
                      {"init_values", r.init_values},
                      {"cost", r.cost},
                      {"iterations", r.iterations},
                      {"converged", r.converged}});
    }
    return {{"winning_restart", winning_restart},
            {"cost", cost},
            {"grad_inf_norm", grad_inf_norm},
            {"iterations", iterations},
            {"converged", converged},
            {"restarts", runs}};
  }
};

// Maximum-likelihood hyperparameter estimation: LBFGS on the cost above,
// run in log-parameter space to enforce positivity, with multi-start from
// log-uniform perturbations of `init` (one decade either way). The best
// cost wins; the unperturbed init is always one of the starts, so the
// returned cost never exceeds cost(init).
inline OptimizeResult optimize(const Eigen::VectorXd& inputs,
                               const Eigen::VectorXd& targets,
                               const HyperParamVector& init,
                               const OptimizeOptions& opts = {},
                               double mean_const = 0.0) {
  init.validate();
  for (double v : init.values) {
    if (!(v > 0.0)) {
      throw InvalidInputError(
          "optimize: the initial hyperparameters must be strictly positive "
          "(the search runs in log space)");
    }
  }
  const std::size_t dim = init.values.size();

  const auto unpack = [&](const Eigen::VectorXd& u) {
    HyperParamVector theta = init;
    for (std::size_t i = 0; i < dim; ++i) {
      theta.values[i] = std::exp(u[static_cast<Eigen::Index>(i)]);
    }
    return theta;
  };
  const Objective objective = [&](const Eigen::VectorXd& u,
                                  Eigen::VectorXd& grad) {
    const HyperParamVector theta = unpack(u);
    const CostGrad cg = cost_and_grad(theta, inputs, targets, mean_const);
    grad.resize(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      grad[i] = cg.grad[i] * theta.values[static_cast<std::size_t>(i)];
    }
    return cg.cost;
  };

  Eigen::VectorXd u0(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    u0[static_cast<Eigen::Index>(i)] = std::log(init.values[i]);
  }

  LbfgsOptions lbfgs_opts;
  lbfgs_opts.max_iter = opts.max_iter;
  lbfgs_opts.grad_tol = opts.tol;
  lbfgs_opts.lower_bound = -opts.log_bound;
  lbfgs_opts.upper_bound = opts.log_bound;

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> decade(-std::log(10.0), std::log(10.0));

  OptimizeResult best;
  bool any_finite = false;
  for (int restart = 0; restart <= opts.restarts; ++restart) {
    Eigen::VectorXd u_init = u0;
    if (restart > 0) {
      for (Eigen::Index i = 0; i < u_init.size(); ++i) {
        u_init[i] += decade(rng);
      }
      u_init = u_init.cwiseMax(-opts.log_bound).cwiseMin(opts.log_bound);
    }
    RestartSummary summary;
    summary.restart = restart;
    summary.init_values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      summary.init_values[i] = std::exp(u_init[static_cast<Eigen::Index>(i)]);
    }
    try {
      const LbfgsResult run = lbfgs_minimize(objective, u_init, lbfgs_opts);
      summary.cost = run.fx;
      summary.iterations = run.iterations;
      summary.converged = run.converged;
      if (!any_finite || run.fx < best.cost) {
        any_finite = true;
        best.theta = unpack(run.x);
        best.cost = run.fx;
        best.grad_inf_norm = run.grad_inf_norm;
        best.iterations = run.iterations;
        best.converged = run.converged;
        best.winning_restart = restart;
      }
    } catch (const NumericalError&) {
      // Objective not finite at this start; recorded as an infinite cost.
    }
    best.restarts.push_back(std::move(summary));
  }
  if (!any_finite) {
    throw NumericalError(
        "hyperparameter optimization diverged from every start; best-so-far "
        "remains the supplied init " + init.to_json().dump());
  }
  return best;
}

}  // namespace trajgp
