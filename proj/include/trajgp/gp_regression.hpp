#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/kernels.hpp"
#include "trajgp/linalg.hpp"

namespace trajgp {

// Posterior of a noisy observation at one query input. The variance
// includes the observation noise.
struct PosteriorPrediction {
  double mean = 0.0;
  double variance = 0.0;

  double stddev() const { return std::sqrt(std::max(variance, 0.0)); }
};

// A fitted batch GP: training data plus the cached Cholesky factor of
// C = K + noise_var*I and alpha = C^-1 (targets - mean). Immutable after
// fit; predict is read-only and safe to call concurrently.
class GPModel {
 public:
  // Fitting costs O(M^3) time and O(M^2) memory. Exactly duplicated inputs
  // with noise_var == 0 make C singular and are rejected; a near-singular C
  // is rescued by the escalating jitter policy of cholesky_with_jitter.
  static GPModel fit(Eigen::VectorXd inputs, Eigen::VectorXd targets,
                     KernelSpec kernel, double noise_var,
                     double mean_const = 0.0) {
    if (inputs.size() != targets.size() || inputs.size() < 1) {
      throw InvalidInputError(
          "GPModel::fit: need equally many inputs and targets, at least one pair");
    }
    if (!targets.allFinite() || !std::isfinite(mean_const)) {
      throw InvalidInputError("GPModel::fit: targets and mean must be finite");
    }
    kernel.validate();

    int duplicate_pairs = 0;
    Eigen::MatrixXd c = kernel.gram(inputs, noise_var, &duplicate_pairs);
    if (duplicate_pairs > 0 && noise_var == 0.0) {
      throw NumericalError(
          "GPModel::fit: duplicate training inputs with zero observation noise "
          "give a singular covariance; add noise or deduplicate the inputs");
    }
    CholeskyFactor chol = cholesky_with_jitter(c, kernel.diag_value());
    Eigen::VectorXd alpha =
        chol.solve(targets - Eigen::VectorXd::Constant(targets.size(), mean_const));
    return GPModel(std::move(inputs), std::move(targets), std::move(kernel),
                   noise_var, mean_const, std::move(chol), std::move(alpha));
  }

  // Posterior mean and variance of a noisy observation at d_star:
  //   mean     = k_*^T C^-1 (targets - mean) + mean
  //   variance = noise_var + k(d_*,d_*) - k_*^T C^-1 k_*
  PosteriorPrediction predict(double d_star) const {
    if (!std::isfinite(d_star)) {
      throw InvalidInputError("GPModel::predict: query input must be finite");
    }
    const Eigen::Index n = inputs_.size();
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      k_star[i] = kernel_.eval(d_star, inputs_[i]);
    }
    const double mean = k_star.dot(alpha_) + mean_const_;
    const Eigen::VectorXd v = chol_.solve_lower(k_star);
    double variance = noise_var_ + kernel_.eval(d_star, d_star) - v.squaredNorm();
    variance = std::max(variance, 0.0);
    return {mean, variance};
  }

  // Negative log marginal likelihood up to constants:
  //   (targets - mean)^T C^-1 (targets - mean) + ln|C|
  // (no 1/2 factor, no 2*pi term). Lower is better.
  double log_marginal_cost() const {
    const Eigen::VectorXd residual =
        targets_ - Eigen::VectorXd::Constant(targets_.size(), mean_const_);
    return alpha_.dot(residual) + chol_.log_det();
  }

  const KernelSpec& kernel() const { return kernel_; }
  double noise_var() const { return noise_var_; }
  double mean_const() const { return mean_const_; }
  const Eigen::VectorXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const CholeskyFactor& chol() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }

  // Kernel spec, noise, mean and training data; the factorization is
  // recomputed on load.
  nlohmann::json to_json() const {
    return {{"kernel", kernel_.to_json()},
            {"noise_var", noise_var_},
            {"mean_const", mean_const_},
            {"inputs", std::vector<double>(inputs_.begin(), inputs_.end())},
            {"targets", std::vector<double>(targets_.begin(), targets_.end())}};
  }

  static GPModel from_json(const nlohmann::json& j) {
    try {
      const auto inputs = j.at("inputs").get<std::vector<double>>();
      const auto targets = j.at("targets").get<std::vector<double>>();
      return fit(Eigen::Map<const Eigen::VectorXd>(inputs.data(), inputs.size()),
                 Eigen::Map<const Eigen::VectorXd>(targets.data(), targets.size()),
                 KernelSpec::from_json(j.at("kernel")),
                 j.at("noise_var").get<double>(),
                 j.at("mean_const").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid GP model JSON: ") + e.what());
    }
  }

 private:
  GPModel(Eigen::VectorXd inputs, Eigen::VectorXd targets, KernelSpec kernel,
          double noise_var, double mean_const, CholeskyFactor chol,
          Eigen::VectorXd alpha)
      : kernel_(std::move(kernel)),
        noise_var_(noise_var),
        mean_const_(mean_const),
        inputs_(std::move(inputs)),
        targets_(std::move(targets)),
        chol_(std::move(chol)),
        alpha_(std::move(alpha)) {}

  KernelSpec kernel_;
  double noise_var_ = 0.0;
  double mean_const_ = 0.0;
  Eigen::VectorXd inputs_;
  Eigen::VectorXd targets_;
  CholeskyFactor chol_;
  Eigen::VectorXd alpha_;
};

}  // namespace trajgp
