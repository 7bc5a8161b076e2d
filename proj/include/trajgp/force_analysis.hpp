#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trajgp/errors.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/hyperopt.hpp"
#include "trajgp/trajectory_io.hpp"

namespace trajgp {

inline constexpr double kGravity = 9.81;  // m/s^2

// One resultant-force training pair derived from two consecutive samples.
struct ForceObservation {
  double d = 0.0;      // midpoint distance on track, meters
  double force = 0.0;  // resultant force, Newtons
  double dt = 0.0;     // time step, seconds
  double dv = 0.0;     // speed change, m/s
};

struct ForceObservations {
  std::vector<ForceObservation> observations;
  int skipped_nonpositive_dt = 0;

  Eigen::VectorXd distances() const {
    Eigen::VectorXd d(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
      d[static_cast<Eigen::Index>(i)] = observations[i].d;
    }
    return d;
  }
  Eigen::VectorXd forces() const {
    Eigen::VectorXd f(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
      f[static_cast<Eigen::Index>(i)] = observations[i].force;
    }
    return f;
  }
};

// Builds resultant-force observations from consecutive samples of a segment
// trajectory:
//   uphill:    F_r = m dv/dt + m g sin(phi)
//   downhill:  F_r = m dv/dt - m g sin(phi)
// phi is the signed incline angle evaluated at the pair's midpoint
// within-lap distance; each observation is placed at the midpoint distance.
// Pairs with dt <= 0 are skipped and counted.
inline ForceObservations build_force_observations(const Trajectory& segment,
                                                  const AltitudeProfile& profile,
                                                  double mass, SegmentKind kind) {
  if (segment.size() < 2) {
    throw InvalidInputError(
        "build_force_observations: need at least 2 samples in the segment");
  }
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw InvalidInputError("build_force_observations: mass must be > 0");
  }
  const double gravity_sign = (kind == SegmentKind::Uphill) ? 1.0 : -1.0;
  ForceObservations out;
  out.observations.reserve(segment.size() - 1);
  for (std::size_t i = 0; i + 1 < segment.samples.size(); ++i) {
    const TrajectorySample& a = segment.samples[i];
    const TrajectorySample& b = segment.samples[i + 1];
    const double dt = b.t - a.t;
    if (dt <= 0.0) {
      ++out.skipped_nonpositive_dt;
      continue;
    }
    const double dv = b.v - a.v;
    const double d_mid = 0.5 * (a.d + b.d);
    const double phi =
        profile.incline_angle(within_lap(d_mid, profile.lap_length()));
    const double force =
        mass * dv / dt + gravity_sign * mass * kGravity * std::sin(phi);
    out.observations.push_back({d_mid, force, dt, dv});
  }
  return out;
}

// Grey-box force model: zero-mean GP over (d, F_r) with the SE force kernel.
// A single observation is accepted and gives the shrunk 1-point posterior.
inline GPModel fit_force_gp(const std::vector<ForceObservation>& observations,
                            const HyperParamVector& theta_r) {
  if (observations.empty()) {
    throw InvalidInputError("fit_force_gp: need at least 1 observation");
  }
  if (theta_r.family != KernelFamily::SquaredExponential) {
    throw InvalidInputError("fit_force_gp: force kernel must be the SE family");
  }
  Eigen::VectorXd d(observations.size()), f(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    d[static_cast<Eigen::Index>(i)] = observations[i].d;
    f[static_cast<Eigen::Index>(i)] = observations[i].force;
  }
  return GPModel::fit(std::move(d), std::move(f), theta_r.kernel(),
                      theta_r.noise_var(), 0.0);
}

inline PosteriorPrediction estimate_force(const GPModel& model, double d_star) {
  return model.predict(d_star);
}

// Predictive standard deviation of the speed change over one time step,
// propagated through the kinetics: sigma_dv = sigma_r(d) * dt / mass.
inline double greybox_delta_v_std(const GPModel& model, double d_t, double mass,
                                  double dt) {
  if (!(mass > 0.0)) {
    throw InvalidInputError("greybox_delta_v_std: mass must be > 0");
  }
  if (dt < 0.0) {
    throw InvalidInputError("greybox_delta_v_std: dt must be >= 0");
  }
  return model.predict(d_t).stddev() * dt / mass;
}

// Empirical CDF with ties resolved by the last-index rule: each distinct
// value x gets P = (rank of its last occurrence) / n.
inline std::vector<std::pair<double, double>> force_cdf(
    std::vector<double> samples) {
  if (samples.empty()) {
    throw InvalidInputError("force_cdf: need at least one sample");
  }
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<std::pair<double, double>> cdf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) {
      continue;
    }
    cdf.emplace_back(samples[i], static_cast<double>(i + 1) / n);
  }
  return cdf;
}

}  // namespace trajgp
