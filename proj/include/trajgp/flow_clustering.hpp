#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/hyperopt.hpp"
#include "trajgp/trajectory_io.hpp"

namespace trajgp {

// Summary statistics of one speed segment, used as the clustering feature
// space. Population moments; skewness and excess kurtosis are defined as 0
// for (near-)constant segments.
struct FeatureVector {
  double max = 0.0;
  double min = 0.0;
  double variance = 0.0;
  double mean = 0.0;
  double energy = 0.0;    // sum of squared speeds
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess kurtosis

  static constexpr int kCount = 7;

  Eigen::Matrix<double, kCount, 1> as_vector() const {
    Eigen::Matrix<double, kCount, 1> v;
    v << max, min, variance, mean, energy, skewness, kurtosis;
    return v;
  }

  static std::vector<std::string> names() {
    return {"max", "min", "variance", "mean", "energy", "skewness", "kurtosis"};
  }

  nlohmann::json to_json() const {
    return {{"max", max},           {"min", min},         {"variance", variance},
            {"mean", mean},         {"energy", energy},   {"skewness", skewness},
            {"kurtosis", kurtosis}};
  }
};

inline FeatureVector extract_features(const Eigen::VectorXd& speeds) {
  if (speeds.size() < 1) {
    throw InvalidInputError("extract_features: need at least one sample");
  }
  FeatureVector f;
  f.max = speeds.maxCoeff();
  f.min = speeds.minCoeff();
  f.mean = speeds.mean();
  f.energy = speeds.squaredNorm();
  const Eigen::ArrayXd centered = speeds.array() - f.mean;
  const double n = static_cast<double>(speeds.size());
  const double m2 = centered.square().sum() / n;
  f.variance = m2;
  if (m2 < 1e-12) {
    f.skewness = 0.0;
    f.kurtosis = 0.0;
  } else {
    const double m3 = centered.cube().sum() / n;
    const double m4 = centered.square().square().sum() / n;
    f.skewness = m3 / std::pow(m2, 1.5);
    f.kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return f;
}

// K-means result over standardized features. Labels are positional
// (label[i] belongs to features[i]); centroids live in standardized space.
struct ClusterAssignment {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;          // k x 7, standardized space
  double objective = 0.0;             // within-cluster sum of squares
  std::vector<double> objective_trace;  // winning restart, per iteration
  Eigen::RowVectorXd feature_mean;    // standardization offsets
  Eigen::RowVectorXd feature_std;     // standardization scales (0 kept as 0)
  int winning_restart = 0;
};

namespace detail {

struct KMeansRun {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> objective_trace;
};

inline KMeansRun kmeans_single(const Eigen::MatrixXd& x, int k,
                               std::mt19937& rng, int max_iter = 100) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();

  // k-means++ seeding.
  Eigen::MatrixXd centroids(k, dim);
  std::uniform_int_distribution<Eigen::Index> uniform(0, n - 1);
  centroids.row(0) = x.row(uniform(rng));
  Eigen::VectorXd dist_sq =
      (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist_sq.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> pick(0.0, total);
      double target = pick(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist_sq[i];
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = uniform(rng);
    }
    centroids.row(c) = x.row(chosen);
    dist_sq = dist_sq.cwiseMin(
        (x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<int> previous(run.labels);
  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment step; ties go to the lowest cluster index.
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_dist = (x.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double dist = (x.row(i) - centroids.row(c)).squaredNorm();
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      run.labels[static_cast<std::size_t>(i)] = best;
      objective += best_dist;
    }
    run.objective = objective;
    run.objective_trace.push_back(objective);
    if (iter > 0 && run.labels == previous) {
      break;
    }
    previous = run.labels;

    // Update step; an empty cluster is re-seeded from the point farthest
    // from its assigned centroid (lowest index on ties).
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      } else {
        Eigen::Index farthest = 0;
        double farthest_dist = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dist =
              (x.row(i) -
               centroids.row(run.labels[static_cast<std::size_t>(i)]))
                  .squaredNorm();
          if (dist > farthest_dist) {
            farthest_dist = dist;
            farthest = i;
          }
        }
        centroids.row(c) = x.row(farthest);
      }
    }
  }
  run.centroids = std::move(centroids);
  return run;
}

}  // namespace detail

// K-means over standardized features: per-dimension zero mean and unit
// variance (constant dimensions stay at 0), seeded k-means++ with 10
// restarts; the best within-cluster sum of squares wins, ties broken by the
// lowest restart index.
inline ClusterAssignment cluster(const std::vector<FeatureVector>& features,
                                 int k, unsigned seed) {
  const std::size_t n = features.size();
  if (k < 1) {
    throw InvalidInputError("cluster: k must be >= 1");
  }
  if (static_cast<std::size_t>(k) > n) {
    throw InvalidInputError("cluster: k = " + std::to_string(k) +
                            " exceeds the number of skiers " + std::to_string(n));
  }

  Eigen::MatrixXd raw(n, FeatureVector::kCount);
  for (std::size_t i = 0; i < n; ++i) {
    raw.row(static_cast<Eigen::Index>(i)) = features[i].as_vector().transpose();
  }
  ClusterAssignment result;
  result.feature_mean = raw.colwise().mean();
  Eigen::MatrixXd x = raw.rowwise() - result.feature_mean;
  result.feature_std =
      (x.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (result.feature_std[c] > 1e-12) {
      x.col(c) /= result.feature_std[c];
    } else {
      x.col(c).setZero();
    }
  }

  constexpr int kRestarts = 10;
  detail::KMeansRun best;
  int best_restart = 0;
  for (int restart = 0; restart < kRestarts; ++restart) {
    std::mt19937 rng(seed + static_cast<unsigned>(restart));
    detail::KMeansRun run = detail::kmeans_single(x, k, rng);
    if (run.objective < best.objective) {
      best = std::move(run);
      best_restart = restart;
    }
  }
  result.labels = std::move(best.labels);
  result.centroids = std::move(best.centroids);
  result.objective = best.objective;
  result.objective_trace = std::move(best.objective_trace);
  result.winning_restart = best_restart;
  return result;
}

// Black-box individual flow model: zero-mean GP over (d, v) with the
// local-periodic kernel.
inline GPModel fit_individual_flow(const Trajectory& traj,
                                   const HyperParamVector& theta) {
  if (traj.size() < 2) {
    throw InvalidInputError("fit_individual_flow: need at least 2 samples");
  }
  if (theta.family != KernelFamily::LocalPeriodic) {
    throw InvalidInputError(
        "fit_individual_flow: flow kernel must be the local-periodic family");
  }
  return GPModel::fit(traj.distances(), traj.speeds(), theta.kernel(),
                      theta.noise_var(), 0.0);
}

// Predictive standard deviation of the speed difference between two
// consecutive time instants: sqrt(var(d_t) + var(d_prev)).
inline double blackbox_delta_v_std(const GPModel& model, double d_t,
                                   double d_prev) {
  return std::sqrt(model.predict(d_t).variance + model.predict(d_prev).variance);
}

// Aggregated per-cluster flow model with correlated cluster noise: zero-mean
// GP over the pooled (d, v) pairs with the composite kernel. Pools larger
// than max_points are thinned with a uniform stride to respect the O(M^3)
// fitting cost.
inline GPModel fit_aggregated_flow(
    const std::vector<std::pair<double, double>>& pooled,
    const HyperParamVector& theta_c, std::size_t max_points = 2000) {
  if (pooled.size() < 2) {
    throw InvalidInputError("fit_aggregated_flow: need at least 2 pooled pairs");
  }
  if (theta_c.family != KernelFamily::CompositeCluster) {
    throw InvalidInputError(
        "fit_aggregated_flow: aggregated kernel must be the composite family");
  }
  if (max_points < 2) {
    throw InvalidInputError("fit_aggregated_flow: max_points must be >= 2");
  }
  const std::size_t n = pooled.size();
  const std::size_t stride = (n + max_points - 1) / max_points;
  std::vector<std::pair<double, double>> kept;
  kept.reserve(n / stride + 1);
  for (std::size_t i = 0; i < n; i += stride) {
    kept.push_back(pooled[i]);
  }
  Eigen::VectorXd d(kept.size()), v(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    d[static_cast<Eigen::Index>(i)] = kept[i].first;
    v[static_cast<Eigen::Index>(i)] = kept[i].second;
  }
  return GPModel::fit(std::move(d), std::move(v), theta_c.kernel(),
                      theta_c.noise_var(), 0.0);
}

}  // namespace trajgp
