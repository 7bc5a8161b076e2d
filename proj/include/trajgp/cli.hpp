#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/flow_clustering.hpp"
#include "trajgp/force_analysis.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/hyperopt.hpp"
#include "trajgp/online_gp.hpp"
#include "trajgp/synthetic.hpp"
#include "trajgp/trajectory_io.hpp"

namespace trajgp::cli {

namespace fs = std::filesystem;

// Published killer-hill comparison from the Falun 2015 men's relay
// (mean sigma_dv per lap, m/s). Reference values only: they come from the
// proprietary race data and are never compared against synthetic runs.
inline constexpr std::array<double, 4> kReferenceBlackBox = {0.4148, 0.4116,
                                                             0.4204, 0.4069};
inline constexpr std::array<double, 4> kReferenceGreyBox = {0.3022, 0.2433,
                                                            0.3066, 0.2207};

// A resolved run configuration: every path made absolute against the config
// file's directory and checked for existence at load time.
struct RunConfig {
  fs::path base_dir;
  std::map<std::string, fs::path> trajectories;  // id -> csv path, ordered
  fs::path altitude_path;
  fs::path skiers_path;
  fs::path segments_path;
  double lap_length = 2500.0;
  int laps = 4;
  double period = 2500.0;
  int grid_size = 500;
  std::array<double, 2> grid_range = {0.0, 10000.0};
  unsigned seed = 1;
  fs::path output_dir;
  int max_train_points = 400;

  AltitudeProfile altitude;
  std::vector<SkierConfig> skiers;
  std::vector<SegmentSpec> segments;

  static RunConfig load(const fs::path& config_path) {
    std::ifstream in(config_path);
    if (!in) {
      throw ConfigError("cannot open config file " + config_path.string());
    }
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + config_path.string() + " is not valid JSON: " +
                        e.what());
    }

    RunConfig config;
    config.base_dir = fs::absolute(config_path).parent_path();
    const auto resolve = [&](const std::string& relative) {
      fs::path p(relative);
      return p.is_absolute() ? p : config.base_dir / p;
    };
    const auto require_file = [&](const fs::path& p, const char* what) {
      if (!fs::exists(p)) {
        throw ConfigError(std::string(what) + " path does not exist: " + p.string());
      }
      return p;
    };

    try {
      config.altitude_path =
          require_file(resolve(j.at("altitude").get<std::string>()), "altitude");
      config.skiers_path =
          require_file(resolve(j.at("skiers").get<std::string>()), "skiers");
      config.segments_path =
          require_file(resolve(j.at("segments").get<std::string>()), "segments");
      for (const auto& [id, path] : j.at("trajectories").items()) {
        config.trajectories[id] =
            require_file(resolve(path.get<std::string>()), "trajectory");
      }
      config.lap_length = j.at("lap_length").get<double>();
      config.laps = j.at("laps").get<int>();
      config.period = j.value("period", config.lap_length);
      config.grid_size = j.value("grid_size", 500);
      if (j.contains("grid_range")) {
        config.grid_range = {j.at("grid_range").at(0).get<double>(),
                             j.at("grid_range").at(1).get<double>()};
      } else {
        config.grid_range = {0.0, config.laps * config.lap_length};
      }
      config.seed = j.value("seed", 1u);
      config.output_dir = resolve(j.value("output_dir", std::string("out")));
      config.max_train_points = j.value("max_train_points", 400);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + config_path.string() + ": " + e.what());
    }

    if (config.grid_size < 1 || !(config.lap_length > 0.0) || config.laps < 1) {
      throw ConfigError("config: need grid_size >= 1, lap_length > 0, laps >= 1");
    }

    config.altitude = AltitudeProfile::load(config.altitude_path);
    {
      std::ifstream skiers_in(config.skiers_path);
      nlohmann::json skiers_json;
      skiers_in >> skiers_json;
      for (const auto& item : skiers_json) {
        config.skiers.push_back(SkierConfig::from_json(item));
      }
    }
    {
      std::ifstream segments_in(config.segments_path);
      nlohmann::json segments_json;
      segments_in >> segments_json;
      for (const auto& item : segments_json) {
        config.segments.push_back(SegmentSpec::from_json(item));
      }
    }
    return config;
  }

  const SkierConfig& skier(const std::string& id) const {
    for (const SkierConfig& s : skiers) {
      if (s.id == id) return s;
    }
    throw ConfigError("unknown skier '" + id + "'");
  }

  const SegmentSpec& segment(const std::string& name) const {
    for (const SegmentSpec& s : segments) {
      if (s.name == name) return s;
    }
    throw ConfigError("unknown segment '" + name + "'");
  }

  Trajectory trajectory(const std::string& id) const {
    const auto it = trajectories.find(id);
    if (it == trajectories.end()) {
      throw ConfigError("no trajectory configured for skier '" + id + "'");
    }
    return load_trajectory(it->second);
  }

  std::vector<int> all_laps() const {
    std::vector<int> result(static_cast<std::size_t>(laps));
    for (int i = 0; i < laps; ++i) result[static_cast<std::size_t>(i)] = i + 1;
    return result;
  }
};

namespace detail_cli {

inline std::vector<int> parse_laps(const std::string& csv) {
  std::vector<int> laps;
  std::stringstream stream(csv);
  std::string token;
  while (std::getline(stream, token, ',')) {
    try {
      laps.push_back(std::stoi(token));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse lap list '" + csv + "'");
    }
  }
  if (laps.empty()) {
    throw ConfigError("empty lap list");
  }
  return laps;
}

inline Trajectory samples_in_laps(const Trajectory& traj,
                                  const std::vector<int>& laps,
                                  double lap_length) {
  Trajectory out;
  for (const TrajectorySample& s : traj.samples) {
    const int lap = lap_of(s.d, lap_length);
    if (std::find(laps.begin(), laps.end(), lap) != laps.end()) {
      out.samples.push_back(s);
    }
  }
  return out;
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> subsample(
    const Eigen::VectorXd& x, const Eigen::VectorXd& y, int max_points) {
  const Eigen::Index n = x.size();
  if (max_points < 2 || n <= max_points) {
    return {x, y};
  }
  const Eigen::Index stride = (n + max_points - 1) / max_points;
  const Eigen::Index kept = (n + stride - 1) / stride;
  Eigen::VectorXd xs(kept), ys(kept);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < n; i += stride) {
    xs[j] = x[i];
    ys[j] = y[i];
    ++j;
  }
  return {xs, ys};
}

inline double population_variance(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

// Data-driven starting points for the hyperparameter search; the
// multi-start perturbations explore one decade around these.
inline HyperParamVector default_flow_init(const Eigen::VectorXd& d,
                                          const Eigen::VectorXd& v,
                                          double period) {
  const double var = std::max(1e-3, population_variance(v));
  const double span = std::max(period, d.maxCoeff() - d.minCoeff());
  return HyperParamVector::local_periodic(std::max(1e-4, 0.1 * var), var, 1.0,
                                          2.0 * span, period);
}

inline HyperParamVector default_force_init(const Eigen::VectorXd& d,
                                           const Eigen::VectorXd& f) {
  const double var = std::max(10.0, population_variance(f));
  const double span = std::max(50.0, d.maxCoeff() - d.minCoeff());
  return HyperParamVector::se(std::max(1.0, 0.3 * var), var,
                              std::clamp(span / 4.0, 20.0, 500.0));
}

inline HyperParamVector default_aggregated_init(const Eigen::VectorXd& d,
                                                const Eigen::VectorXd& v) {
  const double var = std::max(1e-3, population_variance(v));
  const double span = std::max(50.0, d.maxCoeff() - d.minCoeff());
  return HyperParamVector::composite(std::max(1e-4, 0.1 * var), var, span / 3.0,
                                     0.3 * var, span / 6.0);
}

inline HyperParamVector load_theta_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open hyperparameter file " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("hyperparameter file " + path.string() +
                      " is not valid JSON: " + e.what());
  }
  return HyperParamVector::from_json(j.contains("theta") ? j.at("theta") : j);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

inline std::ofstream open_csv(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

inline std::string fmt(double value) { return trajgp::detail::format_double(value); }

// Pooled force observations for one skier over the requested laps.
inline ForceObservations segment_observations(const RunConfig& config,
                                              const Trajectory& traj,
                                              const SegmentSpec& seg,
                                              const std::vector<int>& laps,
                                              double mass) {
  ForceObservations pooled;
  for (int lap : laps) {
    const Trajectory part = extract_segment(traj, seg, lap);
    if (part.size() < 2) continue;
    ForceObservations obs =
        build_force_observations(part, config.altitude, mass, seg.kind);
    pooled.skipped_nonpositive_dt += obs.skipped_nonpositive_dt;
    pooled.observations.insert(pooled.observations.end(),
                               obs.observations.begin(), obs.observations.end());
  }
  return pooled;
}

inline OptimizeResult train_theta(const Eigen::VectorXd& d,
                                  const Eigen::VectorXd& y,
                                  const HyperParamVector& init, unsigned seed,
                                  int max_points) {
  const auto [ds, ys] = subsample(d, y, max_points);
  OptimizeOptions opts;
  opts.seed = seed;
  opts.restarts = 4;
  opts.max_iter = 150;
  return optimize(ds, ys, init, opts);
}

}  // namespace detail_cli

// ---------------------------------------------------------------------------
// generate-sample

struct GenerateArgs {
  std::string output_dir;
  unsigned seed = 1;
  int n_skiers = 8;
};

inline int cmd_generate_sample(const GenerateArgs& args) {
  synthetic::GeneratorOptions options;
  options.seed = args.seed;
  options.n_skiers = args.n_skiers;
  const synthetic::SyntheticRace race = synthetic::generate_race(options);
  synthetic::write_dataset(race, args.output_dir);
  std::cout << "generated " << race.skiers.size() << " skiers, " << options.laps
            << " laps of " << options.lap_length << " m into " << args.output_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_path;
  std::string mode;  // individual | force | aggregated
  std::string skier;
  std::string segment;
  std::string laps_csv;
  std::string out_file;
  std::optional<unsigned> seed;
};

inline int cmd_train(const TrainArgs& args) {
  const RunConfig config = RunConfig::load(args.config_path);
  const unsigned seed = args.seed.value_or(config.seed);
  const std::vector<int> laps = args.laps_csv.empty()
                                    ? config.all_laps()
                                    : detail_cli::parse_laps(args.laps_csv);

  Eigen::VectorXd d, y;
  HyperParamVector init;
  std::string label;
  if (args.mode == "individual") {
    if (args.skier.empty()) throw ConfigError("train --mode individual needs --skier");
    const Trajectory traj = detail_cli::samples_in_laps(
        config.trajectory(args.skier), laps, config.lap_length);
    if (traj.size() < 2) throw ConfigError("not enough samples to train on");
    d = traj.distances();
    y = traj.speeds();
    init = detail_cli::default_flow_init(d, y, config.period);
    label = "individual_" + args.skier;
  } else if (args.mode == "force") {
    if (args.skier.empty() || args.segment.empty()) {
      throw ConfigError("train --mode force needs --skier and --segment");
    }
    const SegmentSpec& seg = config.segment(args.segment);
    const ForceObservations obs = detail_cli::segment_observations(
        config, config.trajectory(args.skier), seg, laps,
        config.skier(args.skier).mass);
    if (obs.observations.size() < 2) {
      throw ConfigError("not enough force observations in segment '" +
                        args.segment + "'");
    }
    d = obs.distances();
    y = obs.forces();
    init = detail_cli::default_force_init(d, y);
    label = "force_" + args.skier + "_" + args.segment;
  } else if (args.mode == "aggregated") {
    if (args.segment.empty()) throw ConfigError("train --mode aggregated needs --segment");
    const SegmentSpec& seg = config.segment(args.segment);
    std::vector<std::pair<double, double>> pooled;
    for (const auto& [id, path] : config.trajectories) {
      const Trajectory traj = load_trajectory(path);
      for (int lap : laps) {
        const Trajectory part = extract_segment(traj, seg, lap);
        for (const TrajectorySample& s : part.samples) {
          pooled.emplace_back(s.d, s.v);
        }
      }
    }
    if (pooled.size() < 2) throw ConfigError("no pooled data for segment");
    d.resize(static_cast<Eigen::Index>(pooled.size()));
    y.resize(static_cast<Eigen::Index>(pooled.size()));
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      d[static_cast<Eigen::Index>(i)] = pooled[i].first;
      y[static_cast<Eigen::Index>(i)] = pooled[i].second;
    }
    init = detail_cli::default_aggregated_init(d, y);
    label = "aggregated_" + args.segment;
  } else {
    throw ConfigError("unknown train mode '" + args.mode +
                      "' (expected individual, force or aggregated)");
  }

  const OptimizeResult result =
      detail_cli::train_theta(d, y, init, seed, config.max_train_points);

  const fs::path out_path = args.out_file.empty()
                                ? config.output_dir / ("theta_" + label + ".json")
                                : fs::path(args.out_file);
  detail_cli::write_json(out_path, {{"theta", result.theta.to_json()},
                                    {"cost", result.cost},
                                    {"converged", result.converged},
                                    {"iterations", result.iterations},
                                    {"seed", seed},
                                    {"training_points", d.size()}});
  detail_cli::write_json(out_path.parent_path() /
                             ("convergence_" + label + ".json"),
                         result.convergence_log());
  std::cout << "trained " << label << ": cost " << result.cost << ", "
            << (result.converged ? "converged" : "max iterations") << ", theta -> "
            << out_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// flow

struct FlowArgs {
  std::string config_path;
  std::string skier;
  std::string engine = "sgp";  // sgp | ogp
  std::string train_laps_csv = "1,2,3";
  int predict_lap = 4;
  std::string hyperparams_file;
  std::optional<int> grid_size;
  bool allow_insample = false;
  std::optional<unsigned> seed;
};

struct FlowSummary {
  double rmse = 0.0;
  double coverage_2sigma = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

inline int cmd_flow(const FlowArgs& args) {
  const RunConfig config = RunConfig::load(args.config_path);
  const unsigned seed = args.seed.value_or(config.seed);
  if (args.engine != "sgp" && args.engine != "ogp") {
    throw ConfigError("engine must be 'sgp' or 'ogp'");
  }
  const std::vector<int> train_laps = detail_cli::parse_laps(args.train_laps_csv);
  if (!args.allow_insample &&
      std::find(train_laps.begin(), train_laps.end(), args.predict_lap) !=
          train_laps.end()) {
    throw ConfigError(
        "predict lap " + std::to_string(args.predict_lap) +
        " is part of the training laps; pass --allow-insample to evaluate in-sample");
  }

  const Trajectory full = config.trajectory(args.skier);
  const Trajectory train =
      detail_cli::samples_in_laps(full, train_laps, config.lap_length);
  const Trajectory test =
      detail_cli::samples_in_laps(full, {args.predict_lap}, config.lap_length);
  if (train.size() < 2) {
    throw ConfigError("not enough training samples in the selected laps");
  }

  const Eigen::VectorXd train_d = train.distances();
  const Eigen::VectorXd train_v = train.speeds();
  HyperParamVector theta;
  if (!args.hyperparams_file.empty()) {
    theta = detail_cli::load_theta_file(args.hyperparams_file);
    if (theta.family != KernelFamily::LocalPeriodic) {
      throw ConfigError("flow expects local-periodic hyperparameters");
    }
  } else {
    theta = detail_cli::train_theta(
                train_d, train_v,
                detail_cli::default_flow_init(train_d, train_v, config.period),
                seed, config.max_train_points)
                .theta;
  }

  const fs::path csv_path =
      config.output_dir / ("flow_" + args.skier + "_" + args.engine + "_lap" +
                           std::to_string(args.predict_lap) + ".csv");
  auto csv = detail_cli::open_csv(csv_path);
  csv << "d,mean,std,observed\n";

  FlowSummary summary;
  summary.n_train = train.size();
  summary.n_test = test.size();

  const auto score = [&](auto&& predict_fn) {
    double sq_sum = 0.0;
    std::size_t covered = 0;
    for (const TrajectorySample& s : test.samples) {
      const PosteriorPrediction p = predict_fn(s.d);
      csv << detail_cli::fmt(s.d) << ',' << detail_cli::fmt(p.mean) << ','
          << detail_cli::fmt(p.stddev()) << ',' << detail_cli::fmt(s.v) << '\n';
      sq_sum += (p.mean - s.v) * (p.mean - s.v);
      if (std::abs(p.mean - s.v) <= 2.0 * p.stddev()) ++covered;
    }
    if (!test.samples.empty()) {
      summary.rmse = std::sqrt(sq_sum / static_cast<double>(test.size()));
      summary.coverage_2sigma =
          static_cast<double>(covered) / static_cast<double>(test.size());
    }
  };

  if (args.engine == "sgp") {
    const GPModel model = GPModel::fit(train_d, train_v, theta.kernel(),
                                       theta.noise_var(), 0.0);
    score([&](double d) { return model.predict(d); });
  } else {
    const int grid_size = args.grid_size.value_or(config.grid_size);
    OnlineGP state(uniform_grid(config.grid_range[0], config.grid_range[1],
                                grid_size),
                   theta.kernel(), theta.noise_var(), 0.0);
    for (const TrajectorySample& s : train.samples) {
      state.update(s.d, s.v);
    }
    score([&](double d) { return state.predict(d); });
  }

  detail_cli::write_json(
      config.output_dir / ("flow_" + args.skier + "_" + args.engine + "_lap" +
                           std::to_string(args.predict_lap) + "_summary.json"),
      {{"skier", args.skier},
       {"engine", args.engine},
       {"train_laps", train_laps},
       {"predict_lap", args.predict_lap},
       {"rmse", summary.rmse},
       {"coverage_2sigma", summary.coverage_2sigma},
       {"n_train", summary.n_train},
       {"n_test", summary.n_test},
       {"theta", theta.to_json()}});

  if (test.samples.empty()) {
    std::cout << "warning: predict lap " << args.predict_lap
              << " has no samples; wrote an empty table\n";
  } else {
    std::cout << "flow " << args.skier << " " << args.engine << ": rmse "
              << summary.rmse << ", 2-sigma coverage " << summary.coverage_2sigma
              << " over " << summary.n_test << " samples\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// force

struct ForceArgs {
  std::string config_path;
  std::string skier;
  std::string segment;
  std::string laps_csv;
  std::string hyperparams_file;
  std::optional<unsigned> seed;
};

inline int cmd_force(const ForceArgs& args) {
  const RunConfig config = RunConfig::load(args.config_path);
  const unsigned seed = args.seed.value_or(config.seed);
  const SegmentSpec& seg = config.segment(args.segment);
  const double mass = config.skier(args.skier).mass;
  const std::vector<int> laps = args.laps_csv.empty()
                                    ? config.all_laps()
                                    : detail_cli::parse_laps(args.laps_csv);

  const Trajectory traj = config.trajectory(args.skier);
  const ForceObservations pooled =
      detail_cli::segment_observations(config, traj, seg, laps, mass);
  if (pooled.observations.size() < 2) {
    throw ConfigError("not enough force observations for skier '" + args.skier +
                      "' in segment '" + args.segment + "'");
  }

  HyperParamVector theta;
  if (!args.hyperparams_file.empty()) {
    theta = detail_cli::load_theta_file(args.hyperparams_file);
    if (theta.family != KernelFamily::SquaredExponential) {
      throw ConfigError("force expects SE hyperparameters");
    }
  } else {
    theta = detail_cli::train_theta(
                pooled.distances(), pooled.forces(),
                detail_cli::default_force_init(pooled.distances(), pooled.forces()),
                seed, config.max_train_points)
                .theta;
  }
  const GPModel model = fit_force_gp(pooled.observations, theta);

  nlohmann::json lap_reports = nlohmann::json::array();
  for (int lap : laps) {
    const Trajectory part = extract_segment(traj, seg, lap);
    if (part.size() < 2) continue;
    const ForceObservations obs =
        build_force_observations(part, config.altitude, mass, seg.kind);
    if (obs.observations.empty()) continue;

    const fs::path curve_path =
        config.output_dir / ("force_" + args.skier + "_" + args.segment + "_lap" +
                             std::to_string(lap) + ".csv");
    auto csv = detail_cli::open_csv(curve_path);
    csv << "d,within_lap_d,mean,std\n";
    std::vector<double> posterior_means;
    double delta_v_std_sum = 0.0;
    for (const ForceObservation& o : obs.observations) {
      const PosteriorPrediction p = estimate_force(model, o.d);
      csv << detail_cli::fmt(o.d) << ','
          << detail_cli::fmt(within_lap(o.d, config.lap_length)) << ','
          << detail_cli::fmt(p.mean) << ',' << detail_cli::fmt(p.stddev()) << '\n';
      posterior_means.push_back(p.mean);
      delta_v_std_sum += greybox_delta_v_std(model, o.d, mass, o.dt);
    }
    nlohmann::json cdf = nlohmann::json::array();
    for (const auto& [force, prob] : force_cdf(posterior_means)) {
      cdf.push_back({force, prob});
    }
    lap_reports.push_back(
        {{"lap", lap},
         {"n_observations", obs.observations.size()},
         {"curve_csv", curve_path.filename().string()},
         {"cdf", cdf},
         {"mean_delta_v_std",
          delta_v_std_sum / static_cast<double>(obs.observations.size())}});
  }

  detail_cli::write_json(
      config.output_dir / ("force_" + args.skier + "_" + args.segment + ".json"),
      {{"skier", args.skier},
       {"segment", args.segment},
       {"kind", to_string(seg.kind)},
       {"mass", mass},
       {"theta", theta.to_json()},
       {"skipped_nonpositive_dt", pooled.skipped_nonpositive_dt},
       {"laps", lap_reports}});
  std::cout << "force report for " << args.skier << " on " << args.segment << ": "
            << lap_reports.size() << " laps\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string config_path;
  std::string skier;
  std::string segment;
  std::optional<unsigned> seed;
};

struct CompareRow {
  int lap = 0;
  double blackbox = 0.0;
  double greybox = 0.0;
  double reduction = 0.0;  // 1 - grey/black
};

// Shared by the command and the acceptance suite: per-lap mean sigma_dv of
// the black-box flow model versus the grey-box force model over one segment.
inline std::vector<CompareRow> compare_rows(const RunConfig& config,
                                            const std::string& skier_id,
                                            const std::string& segment_name,
                                            unsigned seed) {
  const SegmentSpec& seg = config.segment(segment_name);
  const double mass = config.skier(skier_id).mass;
  const Trajectory traj = config.trajectory(skier_id);
  if (traj.size() < 2) {
    throw ConfigError("trajectory too short for comparison");
  }

  // Black box: one individual flow model over the whole race.
  const Eigen::VectorXd all_d = traj.distances();
  const Eigen::VectorXd all_v = traj.speeds();
  const HyperParamVector theta_flow =
      detail_cli::train_theta(
          all_d, all_v,
          detail_cli::default_flow_init(all_d, all_v, config.period), seed,
          config.max_train_points)
          .theta;
  const GPModel flow_model =
      GPModel::fit(all_d, all_v, theta_flow.kernel(), theta_flow.noise_var(), 0.0);

  // Grey box: one force model over the pooled segment observations.
  const ForceObservations pooled = detail_cli::segment_observations(
      config, traj, seg, config.all_laps(), mass);
  if (pooled.observations.size() < 2) {
    throw ConfigError("not enough force observations in segment '" +
                      segment_name + "'");
  }
  const HyperParamVector theta_force =
      detail_cli::train_theta(pooled.distances(), pooled.forces(),
                              detail_cli::default_force_init(pooled.distances(),
                                                             pooled.forces()),
                              seed, config.max_train_points)
          .theta;
  const GPModel force_model = fit_force_gp(pooled.observations, theta_force);

  std::vector<CompareRow> rows;
  for (int lap : config.all_laps()) {
    const double lo = (lap - 1) * config.lap_length + seg.d_start;
    const double hi = (lap - 1) * config.lap_length + seg.d_end;
    double black_sum = 0.0;
    double grey_sum = 0.0;
    int black_n = 0;
    int grey_n = 0;
    for (std::size_t i = 1; i < traj.samples.size(); ++i) {
      const TrajectorySample& prev = traj.samples[i - 1];
      const TrajectorySample& cur = traj.samples[i];
      if (cur.d < lo || cur.d > hi) continue;
      black_sum += blackbox_delta_v_std(flow_model, cur.d, prev.d);
      ++black_n;
      const double dt = cur.t - prev.t;
      if (dt > 0.0) {
        grey_sum +=
            greybox_delta_v_std(force_model, 0.5 * (prev.d + cur.d), mass, dt);
        ++grey_n;
      }
    }
    if (black_n == 0 || grey_n == 0) continue;
    CompareRow row;
    row.lap = lap;
    row.blackbox = black_sum / black_n;
    row.greybox = grey_sum / grey_n;
    row.reduction = 1.0 - row.greybox / row.blackbox;
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_compare(const CompareArgs& args) {
  const RunConfig config = RunConfig::load(args.config_path);
  const unsigned seed = args.seed.value_or(config.seed);
  const std::vector<CompareRow> rows =
      compare_rows(config, args.skier, args.segment, seed);
  if (rows.empty()) {
    throw ConfigError("no laps with data in segment '" + args.segment + "'");
  }

  const fs::path csv_path = config.output_dir /
                            ("compare_" + args.skier + "_" + args.segment + ".csv");
  auto csv = detail_cli::open_csv(csv_path);
  csv << "lap,blackbox_m_s,greybox_m_s,reduction\n";
  nlohmann::json json_rows = nlohmann::json::array();
  for (const CompareRow& row : rows) {
    csv << row.lap << ',' << detail_cli::fmt(row.blackbox) << ','
        << detail_cli::fmt(row.greybox) << ',' << detail_cli::fmt(row.reduction)
        << '\n';
    json_rows.push_back({{"lap", row.lap},
                         {"blackbox_m_s", row.blackbox},
                         {"greybox_m_s", row.greybox},
                         {"reduction", row.reduction}});
  }

  detail_cli::write_json(
      config.output_dir / ("compare_" + args.skier + "_" + args.segment + ".json"),
      {{"skier", args.skier},
       {"segment", args.segment},
       {"rows", json_rows},
       {"reference",
        {{"description",
          "published Falun 2015 men's relay killer-hill values (m/s); "
          "reference only, not comparable to synthetic runs"},
         {"blackbox", kReferenceBlackBox},
         {"greybox", kReferenceGreyBox}}}});

  std::cout << "lap  black-box  grey-box  reduction\n";
  for (const CompareRow& row : rows) {
    std::printf("%3d  %9.4f  %8.4f  %8.1f%%\n", row.lap, row.blackbox,
                row.greybox, 100.0 * row.reduction);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterArgs {
  std::string config_path;
  std::string segment;
  int lap = 1;
  int k = 2;
  std::optional<unsigned> seed;
};

inline int cmd_cluster(const ClusterArgs& args) {
  const RunConfig config = RunConfig::load(args.config_path);
  const unsigned seed = args.seed.value_or(config.seed);
  const SegmentSpec& seg = config.segment(args.segment);

  std::vector<std::string> ids;
  std::vector<FeatureVector> features;
  std::vector<Trajectory> segment_data;
  std::vector<std::string> excluded;
  for (const auto& [id, path] : config.trajectories) {
    const Trajectory part =
        extract_segment(load_trajectory(path), seg, args.lap);
    if (part.size() < 2) {
      excluded.push_back(id);
      continue;
    }
    ids.push_back(id);
    features.push_back(extract_features(part.speeds()));
    segment_data.push_back(part);
  }
  if (static_cast<int>(ids.size()) < args.k) {
    throw ConfigError("only " + std::to_string(ids.size()) +
                      " skiers have data in segment '" + args.segment +
                      "' lap " + std::to_string(args.lap) + ", need k = " +
                      std::to_string(args.k));
  }

  const ClusterAssignment assignment = cluster(features, args.k, seed);

  nlohmann::json skier_entries = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Eigen::Matrix<double, FeatureVector::kCount, 1> raw =
        features[i].as_vector();
    nlohmann::json standardized = nlohmann::json::array();
    for (int c = 0; c < FeatureVector::kCount; ++c) {
      const double sd = assignment.feature_std[c];
      standardized.push_back(
          sd > 1e-12 ? (raw[c] - assignment.feature_mean[c]) / sd : 0.0);
    }
    skier_entries.push_back({{"id", ids[i]},
                             {"cluster", assignment.labels[i]},
                             {"features", features[i].to_json()},
                             {"standardized", standardized}});
  }

  nlohmann::json cluster_entries = nlohmann::json::array();
  for (int c = 0; c < args.k; ++c) {
    std::vector<std::pair<double, double>> pooled;
    std::vector<std::string> members;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (assignment.labels[i] != c) continue;
      members.push_back(ids[i]);
      for (const TrajectorySample& s : segment_data[i].samples) {
        pooled.emplace_back(s.d, s.v);
      }
    }
    nlohmann::json entry = {{"cluster", c}, {"members", members}};
    if (pooled.size() >= 2) {
      std::sort(pooled.begin(), pooled.end());
      Eigen::VectorXd d(pooled.size()), v(pooled.size());
      for (std::size_t i = 0; i < pooled.size(); ++i) {
        d[static_cast<Eigen::Index>(i)] = pooled[i].first;
        v[static_cast<Eigen::Index>(i)] = pooled[i].second;
      }
      const HyperParamVector theta_c =
          detail_cli::train_theta(d, v,
                                  detail_cli::default_aggregated_init(d, v),
                                  seed + static_cast<unsigned>(c),
                                  config.max_train_points)
              .theta;
      const GPModel model = fit_aggregated_flow(pooled, theta_c);

      const double lo = (args.lap - 1) * config.lap_length + seg.d_start;
      const double hi = (args.lap - 1) * config.lap_length + seg.d_end;
      const fs::path curve_path =
          config.output_dir / ("cluster_" + args.segment + "_lap" +
                               std::to_string(args.lap) + "_cluster" +
                               std::to_string(c) + ".csv");
      auto csv = detail_cli::open_csv(curve_path);
      csv << "d,mean,std\n";
      for (double q = lo; q <= hi; q += 2.0) {
        const PosteriorPrediction p = model.predict(q);
        csv << detail_cli::fmt(q) << ',' << detail_cli::fmt(p.mean) << ','
            << detail_cli::fmt(p.stddev()) << '\n';
      }
      entry["theta"] = theta_c.to_json();
      entry["curve_csv"] = curve_path.filename().string();
      entry["n_pooled"] = pooled.size();
    } else {
      entry["note"] = "not enough pooled samples for an aggregated model";
    }
    cluster_entries.push_back(entry);
  }

  nlohmann::json centroids = nlohmann::json::array();
  for (int c = 0; c < assignment.centroids.rows(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (int f = 0; f < assignment.centroids.cols(); ++f) {
      row.push_back(assignment.centroids(c, f));
    }
    centroids.push_back(row);
  }

  detail_cli::write_json(
      config.output_dir / ("cluster_" + args.segment + "_lap" +
                           std::to_string(args.lap) + ".json"),
      {{"segment", args.segment},
       {"lap", args.lap},
       {"k", args.k},
       {"seed", seed},
       {"objective", assignment.objective},
       {"winning_restart", assignment.winning_restart},
       {"feature_names", FeatureVector::names()},
       {"centroids", centroids},
       {"skiers", skier_entries},
       {"clusters", cluster_entries},
       {"excluded", excluded}});
  std::cout << "clustered " << ids.size() << " skiers into " << args.k
            << " clusters (objective " << assignment.objective << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(std::vector<std::string> args) {
  CLI::App app{"Gaussian-process analysis of positioned sport trajectories"};
  app.require_subcommand(1);

  GenerateArgs generate;
  auto* generate_cmd = app.add_subcommand(
      "generate-sample", "Generate a synthetic race dataset with ground truth");
  generate_cmd->add_option("--output", generate.output_dir, "Output directory")
      ->required();
  generate_cmd->add_option("--seed", generate.seed, "Generator seed");
  generate_cmd->add_option("--skiers", generate.n_skiers, "Number of skiers")
      ->check(CLI::PositiveNumber);

  TrainArgs train;
  unsigned train_seed = 0;
  auto* train_cmd =
      app.add_subcommand("train", "Maximum-likelihood hyperparameter training");
  train_cmd->add_option("--config", train.config_path, "Run config JSON")
      ->required();
  train_cmd->add_option("--mode", train.mode,
                        "individual | force | aggregated")
      ->required();
  train_cmd->add_option("--skier", train.skier, "Skier id");
  train_cmd->add_option("--segment", train.segment, "Segment name");
  train_cmd->add_option("--laps", train.laps_csv, "Laps, e.g. 1,2,3");
  train_cmd->add_option("--out", train.out_file, "Output hyperparameter file");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Seed");

  FlowArgs flow;
  unsigned flow_seed = 0;
  int flow_grid = 0;
  auto* flow_cmd = app.add_subcommand(
      "flow", "Fit a speed-vs-distance model and predict a held-out lap");
  flow_cmd->add_option("--config", flow.config_path, "Run config JSON")->required();
  flow_cmd->add_option("--skier", flow.skier, "Skier id")->required();
  flow_cmd->add_option("--engine", flow.engine, "sgp | ogp");
  flow_cmd->add_option("--train-laps", flow.train_laps_csv, "Training laps");
  flow_cmd->add_option("--predict-lap", flow.predict_lap, "Validation lap");
  flow_cmd->add_option("--hyperparams", flow.hyperparams_file,
                       "Hyperparameter JSON (otherwise trained)");
  auto* flow_grid_opt =
      flow_cmd->add_option("--grid-size", flow_grid, "OGP grid size");
  flow_cmd->add_flag("--allow-insample", flow.allow_insample,
                     "Allow predicting a training lap");
  auto* flow_seed_opt = flow_cmd->add_option("--seed", flow_seed, "Seed");

  ForceArgs force;
  unsigned force_seed = 0;
  auto* force_cmd = app.add_subcommand(
      "force", "Grey-box resultant-force estimation over a segment");
  force_cmd->add_option("--config", force.config_path, "Run config JSON")
      ->required();
  force_cmd->add_option("--skier", force.skier, "Skier id")->required();
  force_cmd->add_option("--segment", force.segment, "Segment name")->required();
  force_cmd->add_option("--laps", force.laps_csv, "Laps, e.g. 1,2,3,4");
  force_cmd->add_option("--hyperparams", force.hyperparams_file,
                        "Hyperparameter JSON (otherwise trained)");
  auto* force_seed_opt = force_cmd->add_option("--seed", force_seed, "Seed");

  CompareArgs compare;
  unsigned compare_seed = 0;
  auto* compare_cmd = app.add_subcommand(
      "compare", "Black-box vs grey-box speed-difference uncertainty");
  compare_cmd->add_option("--config", compare.config_path, "Run config JSON")
      ->required();
  compare_cmd->add_option("--skier", compare.skier, "Skier id")->required();
  compare_cmd->add_option("--segment", compare.segment, "Segment name")
      ->required();
  auto* compare_seed_opt = compare_cmd->add_option("--seed", compare_seed, "Seed");

  ClusterArgs cluster_args;
  unsigned cluster_seed = 0;
  auto* cluster_cmd = app.add_subcommand(
      "cluster", "Feature-based clustering and aggregated cluster models");
  cluster_cmd->add_option("--config", cluster_args.config_path, "Run config JSON")
      ->required();
  cluster_cmd->add_option("--segment", cluster_args.segment, "Segment name")
      ->required();
  cluster_cmd->add_option("--lap", cluster_args.lap, "Lap index (1-based)")
      ->required();
  cluster_cmd->add_option("--k", cluster_args.k, "Number of clusters");
  auto* cluster_seed_opt =
      cluster_cmd->add_option("--seed", cluster_seed, "Seed");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate_cmd->parsed()) return cmd_generate_sample(generate);
    if (train_cmd->parsed()) {
      if (train_seed_opt->count() > 0) train.seed = train_seed;
      return cmd_train(train);
    }
    if (flow_cmd->parsed()) {
      if (flow_seed_opt->count() > 0) flow.seed = flow_seed;
      if (flow_grid_opt->count() > 0) flow.grid_size = flow_grid;
      return cmd_flow(flow);
    }
    if (force_cmd->parsed()) {
      if (force_seed_opt->count() > 0) force.seed = force_seed;
      return cmd_force(force);
    }
    if (compare_cmd->parsed()) {
      if (compare_seed_opt->count() > 0) compare.seed = compare_seed;
      return cmd_compare(compare);
    }
    if (cluster_cmd->parsed()) {
      if (cluster_seed_opt->count() > 0) cluster_args.seed = cluster_seed;
      return cmd_cluster(cluster_args);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace trajgp::cli
