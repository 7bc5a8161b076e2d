#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/kernels.hpp"
#include "trajgp/linalg.hpp"

namespace trajgp {

// Grid-based on-line GP: keeps a Gaussian posterior over the latent
// function values at s fixed grid inputs and folds in one observation at a
// time. Initialization costs O(s^3) once (inverting the prior covariance);
// each update and each prediction costs O(s^2), independent of how many
// observations have been processed.
//
// One state is owned by one updating context; updates are strictly
// sequential. Predictions are read-only and may run concurrently with each
// other, but never with an update on the same state.
class OnlineGP {
 public:
  // Grid entries must be pairwise distinct; a singular prior covariance is
  // first attacked with the escalating jitter policy, exact duplicates are
  // rejected outright.
  OnlineGP(Eigen::VectorXd grid, KernelSpec kernel, double noise_var,
           double mean_const = 0.0)
      : grid_(std::move(grid)),
        kernel_(std::move(kernel)),
        noise_var_(noise_var),
        mean_const_(mean_const) {
    const Eigen::Index s = grid_.size();
    if (s < 1) {
      throw InvalidInputError("OnlineGP: grid must have at least one point");
    }
    if (!(std::isfinite(noise_var_) && noise_var_ >= 0.0) ||
        !std::isfinite(mean_const_)) {
      throw InvalidInputError("OnlineGP: noise_var must be >= 0 and mean finite");
    }
    kernel_.validate();

    int duplicate_pairs = 0;
    Eigen::MatrixXd k_bar = kernel_.gram(grid_, 0.0, &duplicate_pairs);
    if (duplicate_pairs > 0) {
      throw InvalidInputError("OnlineGP: grid points must be distinct");
    }
    const CholeskyFactor chol = cholesky_with_jitter(k_bar, kernel_.diag_value());
    if (chol.jitter > 0.0) {
      k_bar.diagonal().array() += chol.jitter;
    }
    k_bar_ = std::move(k_bar);
    k_bar_inv_ = chol.inverse();
    m_bar_ = Eigen::VectorXd::Constant(s, mean_const_);
    mu_g_ = m_bar_;
    k_g_ = k_bar_;
  }

  OnlineGP(const OnlineGP& other)
      : grid_(other.grid_),
        kernel_(other.kernel_),
        noise_var_(other.noise_var_),
        mean_const_(other.mean_const_),
        m_bar_(other.m_bar_),
        mu_g_(other.mu_g_),
        k_bar_(other.k_bar_),
        k_bar_inv_(other.k_bar_inv_),
        k_g_(other.k_g_),
        count_(other.count_),
        clamp_events_(other.clamp_events_.load()) {}

  OnlineGP& operator=(const OnlineGP& other) {
    if (this != &other) {
      grid_ = other.grid_;
      kernel_ = other.kernel_;
      noise_var_ = other.noise_var_;
      mean_const_ = other.mean_const_;
      m_bar_ = other.m_bar_;
      mu_g_ = other.mu_g_;
      k_bar_ = other.k_bar_;
      k_bar_inv_ = other.k_bar_inv_;
      k_g_ = other.k_g_;
      count_ = other.count_;
      clamp_events_.store(other.clamp_events_.load());
    }
    return *this;
  }

  // One recursion step:
  //   J       = k(d_t, grid) Kbar^-1
  //   mu_p    = m(d_t) + J (mu_g - m_bar)
  //   s2_p    = k(d_t, d_t) + J (K_g - Kbar) J^T
  //   g       = K_g J^T / (noise_var + s2_p)
  //   mu_g   += g (v_t - mu_p)
  //   K_g    -= g J K_g          (then re-symmetrized)
  void update(double d_t, double v_t) {
    if (!std::isfinite(d_t) || !std::isfinite(v_t)) {
      throw InvalidInputError("OnlineGP::update: observation must be finite");
    }
    const Eigen::VectorXd k_row = kernel_row(d_t);
    const Eigen::VectorXd j = k_bar_inv_ * k_row;  // Kbar^-1 is symmetric
    const double mu_p = mean_const_ + j.dot(mu_g_ - m_bar_);
    const double s2_p =
        kernel_.eval(d_t, d_t) + j.dot((k_g_ - k_bar_) * j);
    const double denom = noise_var_ + s2_p;
    if (!(denom > 0.0) || !std::isfinite(denom)) {
      throw NumericalError(
          "OnlineGP::update: non-positive innovation variance; the grid prior "
          "has degenerated");
    }
    const Eigen::VectorXd w = k_g_ * j;
    const Eigen::VectorXd g = w / denom;
    mu_g_ += g * (v_t - mu_p);
    k_g_ -= g * w.transpose();
    // Rank-1 downdates drift off symmetry in floating point.
    k_g_ = 0.5 * (k_g_ + k_g_.transpose()).eval();
    ++count_;
  }

  // Approximate posterior of a noisy observation at d_star:
  //   mean = k_row^T Kbar^-1 (mu_g - m_bar) + m(d_star)
  //   var  = k(d_star,d_star) + noise_var
  //          + k_row^T Kbar^-1 (K_g Kbar^-1 - I) k_row
  // For badly placed grids the variance can dip below the noise floor; it
  // is clamped at noise_var * 1e-6 and the event counted rather than
  // silently floored at noise_var.
  PosteriorPrediction predict(double d_star) const {
    if (!std::isfinite(d_star)) {
      throw InvalidInputError("OnlineGP::predict: query input must be finite");
    }
    const Eigen::VectorXd k_row = kernel_row(d_star);
    const Eigen::VectorXd w = k_bar_inv_ * k_row;
    const double mean = w.dot(mu_g_ - m_bar_) + mean_const_;
    double variance = kernel_.eval(d_star, d_star) + noise_var_ +
                      w.dot(k_g_ * w) - w.dot(k_row);
    const double floor = noise_var_ * 1e-6;
    if (variance < floor) {
      variance = floor;
      ++clamp_events_;
    }
    return {mean, variance};
  }

  const Eigen::VectorXd& grid() const { return grid_; }
  const Eigen::VectorXd& mu_g() const { return mu_g_; }
  const Eigen::MatrixXd& k_g() const { return k_g_; }
  const Eigen::MatrixXd& k_bar() const { return k_bar_; }
  const Eigen::MatrixXd& k_bar_inv() const { return k_bar_inv_; }
  const KernelSpec& kernel() const { return kernel_; }
  double noise_var() const { return noise_var_; }
  double mean_const() const { return mean_const_; }
  std::int64_t count() const { return count_; }
  std::int64_t variance_clamp_events() const { return clamp_events_.load(); }

  // Heap footprint of the recursion state; constant in the number of
  // observations processed (only the grid size matters).
  std::size_t state_bytes() const {
    const std::size_t s = static_cast<std::size_t>(grid_.size());
    return sizeof(double) * (3 * s + 3 * s * s);
  }

  // Checkpoint for stop/resume of a streaming run. The prior covariance and
  // its inverse are recomputed on restore.
  nlohmann::json checkpoint() const {
    std::vector<double> k_g_flat(static_cast<std::size_t>(k_g_.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>(
        k_g_flat.data(), k_g_.rows(), k_g_.cols()) = k_g_;
    return {{"grid", std::vector<double>(grid_.begin(), grid_.end())},
            {"mu_g", std::vector<double>(mu_g_.begin(), mu_g_.end())},
            {"k_g", k_g_flat},
            {"kernel", kernel_.to_json()},
            {"noise_var", noise_var_},
            {"mean_const", mean_const_},
            {"count", count_}};
  }

  static OnlineGP restore(const nlohmann::json& j) {
    try {
      const auto grid = j.at("grid").get<std::vector<double>>();
      OnlineGP state(
          Eigen::Map<const Eigen::VectorXd>(grid.data(), grid.size()),
          KernelSpec::from_json(j.at("kernel")), j.at("noise_var").get<double>(),
          j.at("mean_const").get<double>());
      const auto mu = j.at("mu_g").get<std::vector<double>>();
      const auto k_g_flat = j.at("k_g").get<std::vector<double>>();
      const Eigen::Index s = state.grid_.size();
      if (mu.size() != static_cast<std::size_t>(s) ||
          k_g_flat.size() != static_cast<std::size_t>(s * s)) {
        throw ConfigError("online GP checkpoint has inconsistent sizes");
      }
      state.mu_g_ = Eigen::Map<const Eigen::VectorXd>(mu.data(), s);
      state.k_g_ =
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>>(k_g_flat.data(), s, s);
      state.count_ = j.at("count").get<std::int64_t>();
      return state;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid online GP checkpoint: ") + e.what());
    }
  }

 private:
  Eigen::VectorXd kernel_row(double d) const {
    const Eigen::Index s = grid_.size();
    Eigen::VectorXd row(s);
    for (Eigen::Index i = 0; i < s; ++i) {
      row[i] = kernel_.eval(d, grid_[i]);
    }
    return row;
  }

  Eigen::VectorXd grid_;
  KernelSpec kernel_;
  double noise_var_ = 0.0;
  double mean_const_ = 0.0;
  Eigen::VectorXd m_bar_;
  Eigen::VectorXd mu_g_;
  Eigen::MatrixXd k_bar_;
  Eigen::MatrixXd k_bar_inv_;
  Eigen::MatrixXd k_g_;
  std::int64_t count_ = 0;
  mutable std::atomic<std::int64_t> clamp_events_{0};
};

// Uniformly spaced grid of `size` points over [d_min, d_max].
inline Eigen::VectorXd uniform_grid(double d_min, double d_max, int size) {
  if (size < 1 || !(d_max > d_min)) {
    throw InvalidInputError("uniform_grid: need size >= 1 and d_max > d_min");
  }
  if (size == 1) {
    return Eigen::VectorXd::Constant(1, 0.5 * (d_min + d_max));
  }
  return Eigen::VectorXd::LinSpaced(size, d_min, d_max);
}

}  // namespace trajgp
