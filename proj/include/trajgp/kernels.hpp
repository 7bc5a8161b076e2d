#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"

namespace trajgp {

enum class KernelFamily {
  SquaredExponential,
  LocalPeriodic,
  CompositeCluster,
};

inline std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::LocalPeriodic: return "local_periodic";
    case KernelFamily::CompositeCluster: return "composite_cluster";
  }
  throw InvalidInputError("unknown kernel family");
}

inline KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "se") return KernelFamily::SquaredExponential;
  if (name == "local_periodic") return KernelFamily::LocalPeriodic;
  if (name == "composite_cluster") return KernelFamily::CompositeCluster;
  throw ConfigError("unknown kernel family '" + name + "'");
}

// k(d,d') = sigma_sq * exp(-(d-d')^2 / length^2).
// Note the convention: no factor 2 in the denominator.
// sigma_sq == 0 is allowed so a composite kernel can degenerate to its base
// component; the optimizer never proposes it (it works in log space).
struct SEParams {
  double sigma_sq = 1.0;
  double length = 1.0;

  void validate() const {
    if (!(std::isfinite(sigma_sq) && sigma_sq >= 0.0)) {
      throw InvalidInputError("SE kernel: sigma_sq must be finite and >= 0");
    }
    if (!(std::isfinite(length) && length > 0.0)) {
      throw InvalidInputError("SE kernel: length must be finite and > 0");
    }
  }
};

// Product of an SE kernel and a periodic kernel:
// k(d,d') = sigma_sq * exp(-sin^2(pi (d-d')/period) / period_scale^2)
//                    * exp(-(d-d')^2 / decay_scale^2).
// `period` is a fixed, user-supplied constant (e.g. the lap length); it is
// not part of the calibrated hyperparameter vector.
struct LocalPeriodicParams {
  double sigma_sq = 1.0;
  double period_scale = 1.0;  // l_p, argument scale of the periodic factor
  double decay_scale = 1.0;   // l_d, meters
  double period = 1.0;        // lambda, meters

  void validate() const {
    if (!(std::isfinite(sigma_sq) && sigma_sq >= 0.0) ||
        !(std::isfinite(period_scale) && period_scale > 0.0) ||
        !(std::isfinite(decay_scale) && decay_scale > 0.0) ||
        !(std::isfinite(period) && period > 0.0)) {
      throw InvalidInputError(
          "local-periodic kernel: scales must be finite and > 0, variance >= 0");
    }
  }
};

// Sum of a base SE kernel and a second SE kernel modeling correlated
// cluster noise: k'(d,d') = k_base(d,d') + k_cluster(d,d').
struct CompositeClusterParams {
  SEParams base;     // sigma_s^2, l_d
  SEParams cluster;  // sigma_c^2, l_c

  void validate() const {
    base.validate();
    cluster.validate();
  }
};

namespace detail {

inline double se_eval(const SEParams& p, double tau) {
  return p.sigma_sq * std::exp(-(tau * tau) / (p.length * p.length));
}

inline double lp_eval(const LocalPeriodicParams& p, double tau) {
  const double s = std::sin(std::numbers::pi * tau / p.period);
  const double periodic = std::exp(-(s * s) / (p.period_scale * p.period_scale));
  const double decay = std::exp(-(tau * tau) / (p.decay_scale * p.decay_scale));
  return p.sigma_sq * periodic * decay;
}

}  // namespace detail

// A covariance function: family tag plus its parameter record. Kernel
// parameters live in natural space; positivity during optimization is the
// hyperopt module's job (log-reparametrization).
class KernelSpec {
 public:
  KernelSpec() : params_(SEParams{}) {}
  explicit KernelSpec(SEParams p) : params_(p) { p.validate(); }
  explicit KernelSpec(LocalPeriodicParams p) : params_(p) { p.validate(); }
  explicit KernelSpec(CompositeClusterParams p) : params_(p) { p.validate(); }

  KernelFamily family() const {
    switch (params_.index()) {
      case 0: return KernelFamily::SquaredExponential;
      case 1: return KernelFamily::LocalPeriodic;
      default: return KernelFamily::CompositeCluster;
    }
  }

  const SEParams& se() const { return std::get<SEParams>(params_); }
  const LocalPeriodicParams& local_periodic() const {
    return std::get<LocalPeriodicParams>(params_);
  }
  const CompositeClusterParams& composite() const {
    return std::get<CompositeClusterParams>(params_);
  }

  void validate() const {
    std::visit([](const auto& p) { p.validate(); }, params_);
  }

  // k(d, d2); symmetric in its arguments.
  double eval(double d, double d2) const {
    if (!std::isfinite(d) || !std::isfinite(d2)) {
      throw InvalidInputError("kernel eval: inputs must be finite");
    }
    const double tau = d - d2;
    switch (params_.index()) {
      case 0: return detail::se_eval(se(), tau);
      case 1: return detail::lp_eval(local_periodic(), tau);
      default:
        return detail::se_eval(composite().base, tau) +
               detail::se_eval(composite().cluster, tau);
    }
  }

  // k(d, d) — the prior variance. sigma_sq for SE/LP, sigma_s^2 + sigma_c^2
  // for the composite kernel.
  double diag_value() const {
    switch (params_.index()) {
      case 0: return se().sigma_sq;
      case 1: return local_periodic().sigma_sq;
      default: return composite().base.sigma_sq + composite().cluster.sigma_sq;
    }
  }

  // Number of hyperparameter gradient slots, noise variance included as
  // slot 0: SE -> 3, local-periodic -> 4 (period excluded), composite -> 5.
  int gradient_count() const {
    switch (params_.index()) {
      case 0: return 3;
      case 1: return 4;
      default: return 5;
    }
  }

  // K(d,d) + noise_var * I. If `duplicate_pairs` is given it receives the
  // number of exactly coincident input pairs, which make the matrix
  // singular when noise_var == 0 — callers decide whether that is fatal.
  Eigen::MatrixXd gram(const Eigen::VectorXd& inputs, double noise_var,
                       int* duplicate_pairs = nullptr) const {
    const Eigen::Index n = inputs.size();
    if (n == 0) {
      throw InvalidInputError("gram: inputs must be non-empty");
    }
    if (!(std::isfinite(noise_var) && noise_var >= 0.0)) {
      throw InvalidInputError("gram: noise_var must be finite and >= 0");
    }
    if (!inputs.allFinite()) {
      throw InvalidInputError("gram: inputs must be finite");
    }
    int duplicates = 0;
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      k(i, i) = diag_value() + noise_var;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double value = eval(inputs[i], inputs[j]);
        k(i, j) = value;
        k(j, i) = value;
        if (inputs[i] == inputs[j]) ++duplicates;
      }
    }
    if (duplicate_pairs != nullptr) {
      *duplicate_pairs = duplicates;
    }
    return k;
  }

  // dC/dtheta_i for C = K + noise_var*I, with the closed-form diagonal
  // special cases: identity for the noise slot, 1 on the diagonal for
  // variance parameters, 0 on the diagonal for length scales.
  //
  // Slot order per family (noise first):
  //   SE:              [noise_var, sigma_sq, length]
  //   local-periodic:  [noise_var, sigma_sq, period_scale, decay_scale]
  //   composite:       [noise_var, sigma_sq, decay_scale,
  //                     cluster_sigma_sq, cluster_length]
  Eigen::MatrixXd gram_grad(const Eigen::VectorXd& inputs,
                            int param_index) const {
    const Eigen::Index n = inputs.size();
    if (n == 0) {
      throw InvalidInputError("gram_grad: inputs must be non-empty");
    }
    if (param_index < 0 || param_index >= gradient_count()) {
      throw InvalidInputError("gram_grad: parameter index " +
                              std::to_string(param_index) +
                              " is out of range for this kernel family");
    }
    if (param_index == 0) {
      return Eigen::MatrixXd::Identity(n, n);
    }

    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    auto fill = [&](auto&& entry, double diagonal) {
      for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = diagonal;
        for (Eigen::Index j = 0; j < i; ++j) {
          const double value = entry(inputs[i] - inputs[j]);
          g(i, j) = value;
          g(j, i) = value;
        }
      }
    };

    const auto se_factor = [](const SEParams& p, double tau) {
      return std::exp(-(tau * tau) / (p.length * p.length));
    };

    switch (params_.index()) {
      case 0: {
        const SEParams& p = se();
        if (param_index == 1) {
          fill([&](double tau) { return se_factor(p, tau); }, 1.0);
        } else {
          fill([&](double tau) {
            return 2.0 * detail::se_eval(p, tau) * tau * tau /
                   (p.length * p.length * p.length);
          }, 0.0);
        }
        break;
      }
      case 1: {
        const LocalPeriodicParams& p = local_periodic();
        if (param_index == 1) {
          fill([&](double tau) {
            const double s = std::sin(std::numbers::pi * tau / p.period);
            return std::exp(-(s * s) / (p.period_scale * p.period_scale)) *
                   std::exp(-(tau * tau) / (p.decay_scale * p.decay_scale));
          }, 1.0);
        } else if (param_index == 2) {
          fill([&](double tau) {
            const double s = std::sin(std::numbers::pi * tau / p.period);
            return 2.0 * detail::lp_eval(p, tau) * s * s /
                   (p.period_scale * p.period_scale * p.period_scale);
          }, 0.0);
        } else {
          fill([&](double tau) {
            return 2.0 * detail::lp_eval(p, tau) * tau * tau /
                   (p.decay_scale * p.decay_scale * p.decay_scale);
          }, 0.0);
        }
        break;
      }
      default: {
        const CompositeClusterParams& p = composite();
        if (param_index == 1) {
          fill([&](double tau) { return se_factor(p.base, tau); }, 1.0);
        } else if (param_index == 2) {
          fill([&](double tau) {
            return 2.0 * detail::se_eval(p.base, tau) * tau * tau /
                   (p.base.length * p.base.length * p.base.length);
          }, 0.0);
        } else if (param_index == 3) {
          fill([&](double tau) { return se_factor(p.cluster, tau); }, 1.0);
        } else {
          fill([&](double tau) {
            return 2.0 * detail::se_eval(p.cluster, tau) * tau * tau /
                   (p.cluster.length * p.cluster.length * p.cluster.length);
          }, 0.0);
        }
        break;
      }
    }
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json params;
    switch (params_.index()) {
      case 0:
        params = {{"sigma_sq", se().sigma_sq}, {"length", se().length}};
        break;
      case 1:
        params = {{"sigma_sq", local_periodic().sigma_sq},
                  {"period_scale", local_periodic().period_scale},
                  {"decay_scale", local_periodic().decay_scale},
                  {"period", local_periodic().period}};
        break;
      default:
        params = {{"base",
                   {{"sigma_sq", composite().base.sigma_sq},
                    {"length", composite().base.length}}},
                  {"cluster",
                   {{"sigma_sq", composite().cluster.sigma_sq},
                    {"length", composite().cluster.length}}}};
        break;
    }
    return {{"family", to_string(family())}, {"params", params}};
  }

  static KernelSpec from_json(const nlohmann::json& j) {
    try {
      const KernelFamily family =
          kernel_family_from_string(j.at("family").get<std::string>());
      const nlohmann::json& p = j.at("params");
      switch (family) {
        case KernelFamily::SquaredExponential:
          return KernelSpec(SEParams{p.at("sigma_sq").get<double>(),
                                     p.at("length").get<double>()});
        case KernelFamily::LocalPeriodic:
          return KernelSpec(LocalPeriodicParams{
              p.at("sigma_sq").get<double>(), p.at("period_scale").get<double>(),
              p.at("decay_scale").get<double>(), p.at("period").get<double>()});
        case KernelFamily::CompositeCluster:
          return KernelSpec(CompositeClusterParams{
              SEParams{p.at("base").at("sigma_sq").get<double>(),
                       p.at("base").at("length").get<double>()},
              SEParams{p.at("cluster").at("sigma_sq").get<double>(),
                       p.at("cluster").at("length").get<double>()}});
      }
      throw ConfigError("unknown kernel family");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid kernel spec JSON: ") + e.what());
    }
  }

 private:
  std::variant<SEParams, LocalPeriodicParams, CompositeClusterParams> params_;
};

}  // namespace trajgp
