#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajgp/errors.hpp"
#include "trajgp/force_analysis.hpp"
#include "trajgp/trajectory_io.hpp"

namespace trajgp::synthetic {

// Stand-in for a real relay dataset: a 4-lap race on a closed 2500 m loop,
// simulated from known longitudinal dynamics and sampled at 1 Hz, with the
// noise-free ground truth written alongside so tests can score estimates
// against it. Everything here (course, masses, forces) is made up.
struct GeneratorOptions {
  int n_skiers = 8;
  int laps = 4;
  double lap_length = 2500.0;
  double speed_noise_std = 0.12;  // m/s, measurement noise on ground speed
  unsigned seed = 1;

  // Longitudinal dynamics: m dv/dt = F_prop - f0 - c_drag v^2 - m g sin(phi).
  double base_propulsion = 34.0;   // N, flat-ground effort
  double grade_compensation = 0.85;  // fraction of the gravity term added uphill
  double rolling_resistance = 18.0;  // N
  double drag_coefficient = 0.38;    // N / (m/s)^2
};

struct SkierTruth {
  SkierConfig config;
  double skill = 1.0;                   // multiplies propulsion
  std::vector<double> lap_factors;      // per-lap effort multipliers
  double wiggle_phase_a = 0.0;
  double wiggle_phase_b = 0.0;
  Trajectory measured;                  // noisy speeds, what analyses consume
  Trajectory clean;                     // noise-free speeds at the same times
  std::vector<std::pair<double, double>> true_force;  // (d, F_r) at 1 Hz
};

struct SyntheticRace {
  GeneratorOptions options;
  AltitudeProfile altitude;
  std::vector<SegmentSpec> segments;
  std::vector<SkierTruth> skiers;
};

namespace detail_gen {

// Closed 2500 m rolling loop. The killer hill climbs 8 % over
// [1000, 1300]; the steepest downhill drops 8 % over [1600, 1900].
inline AltitudeProfile course_altitude() {
  return AltitudeProfile::from_points({{0.0, 0.0},
                                       {200.0, 4.0},
                                       {400.0, 2.0},
                                       {700.0, 8.0},
                                       {1000.0, 2.0},
                                       {1300.0, 26.0},
                                       {1450.0, 29.0},
                                       {1600.0, 31.0},
                                       {1900.0, 7.0},
                                       {2100.0, 3.0},
                                       {2300.0, 6.0},
                                       {2500.0, 0.0}});
}

inline std::vector<SegmentSpec> course_segments(double lap_length) {
  return {{"killer_hill", 1000.0, 1300.0, SegmentKind::Uphill, lap_length},
          {"steepest_downhill", 1600.0, 1900.0, SegmentKind::Downhill, lap_length}};
}

// Track drawn as a circle around a made-up venue; pass-through metadata.
inline std::pair<double, double> track_position(double within_lap_d,
                                                double lap_length) {
  constexpr double lat0 = 60.61;
  constexpr double lon0 = 15.63;
  const double radius = lap_length / (2.0 * std::numbers::pi);
  const double angle = 2.0 * std::numbers::pi * within_lap_d / lap_length;
  const double lat = lat0 + radius * std::sin(angle) / 111320.0;
  const double lon =
      lon0 + radius * std::cos(angle) / (111320.0 * std::cos(lat0 * std::numbers::pi / 180.0));
  return {lat, lon};
}

}  // namespace detail_gen

// Propulsive force of one skier at a course position. Uphill effort tracks
// the grade; on clear descents the skier tucks and stops pushing.
inline double propulsion(const GeneratorOptions& opts, const SkierTruth& skier,
                         const AltitudeProfile& altitude, double d,
                         int lap_index) {
  const double u = within_lap(d, opts.lap_length);
  const double sin_phi = std::sin(altitude.incline_angle(u));
  if (sin_phi < -0.02) {
    return 0.0;
  }
  const double mass = skier.config.mass;
  const double grade_term =
      opts.grade_compensation * mass * kGravity * std::max(0.0, sin_phi);
  const double wiggle =
      8.0 * std::sin(2.0 * std::numbers::pi * u / 230.0 + skier.wiggle_phase_a) +
      5.0 * std::sin(2.0 * std::numbers::pi * u / 470.0 + skier.wiggle_phase_b);
  const double lap_factor =
      skier.lap_factors[static_cast<std::size_t>(
          std::clamp(lap_index, 1, static_cast<int>(skier.lap_factors.size())) - 1)];
  return std::max(
      0.0, skier.skill * lap_factor * (opts.base_propulsion + grade_term) + wiggle);
}

// True resultant force (propulsion minus rolling resistance and drag) at a
// given position and speed; gravity is excluded by construction.
inline double true_resultant_force(const GeneratorOptions& opts,
                                   const SkierTruth& skier,
                                   const AltitudeProfile& altitude, double d,
                                   double v, int lap_index) {
  return propulsion(opts, skier, altitude, d, lap_index) -
         opts.rolling_resistance - opts.drag_coefficient * v * v;
}

inline SyntheticRace generate_race(const GeneratorOptions& opts) {
  if (opts.n_skiers < 1 || opts.laps < 1 || !(opts.lap_length > 0.0)) {
    throw InvalidInputError("generate_race: invalid generator options");
  }
  SyntheticRace race;
  race.options = opts;
  race.altitude = detail_gen::course_altitude();
  race.segments = detail_gen::course_segments(opts.lap_length);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> skill_dist(0.96, 1.04);
  std::uniform_real_distribution<double> lap_jitter(-0.012, 0.012);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> speed_noise(0.0, opts.speed_noise_std);

  const std::vector<double> lap_profile = {1.0, 0.99, 0.985, 1.012};
  const std::vector<std::string> teams = {"team_a", "team_b", "team_c", "team_d"};

  for (int i = 0; i < opts.n_skiers; ++i) {
    SkierTruth skier;
    char id[16];
    std::snprintf(id, sizeof(id), "skier_%02d", i + 1);
    skier.config.id = id;
    skier.config.mass = 70.0 + 2.5 * (i % 8);
    skier.config.team = teams[static_cast<std::size_t>(i) % teams.size()];
    skier.skill = skill_dist(rng);
    for (int lap = 0; lap < opts.laps; ++lap) {
      const double base =
          lap_profile[static_cast<std::size_t>(lap) % lap_profile.size()];
      skier.lap_factors.push_back(base + lap_jitter(rng));
    }
    skier.wiggle_phase_a = phase(rng);
    skier.wiggle_phase_b = phase(rng);

    // RK4 on (d, v), sampled every whole second.
    const double mass = skier.config.mass;
    const double race_distance = opts.laps * opts.lap_length;
    const double dt = 0.02;
    const int steps_per_sample = 50;
    double d = 0.0;
    double v = 2.0;
    double t = 0.0;
    const auto accel = [&](double dd, double vv) {
      const double u = within_lap(dd, opts.lap_length);
      const int lap_index = std::min(lap_of(dd, opts.lap_length), opts.laps);
      const double sin_phi = std::sin(race.altitude.incline_angle(u));
      const double force =
          true_resultant_force(opts, skier, race.altitude, dd, vv, lap_index);
      return (force - mass * kGravity * sin_phi) / mass;
    };
    while (d < race_distance) {
      const double u = within_lap(d, opts.lap_length);
      const auto [lat, lon] = detail_gen::track_position(u, opts.lap_length);
      const int lap_index = std::min(lap_of(d, opts.lap_length), opts.laps);
      skier.clean.samples.push_back({t, lat, lon, d, v});
      skier.measured.samples.push_back(
          {t, lat, lon, d, std::max(0.05, v + speed_noise(rng))});
      skier.true_force.emplace_back(
          d, true_resultant_force(opts, skier, race.altitude, d, v, lap_index));

      for (int step = 0; step < steps_per_sample && d < race_distance; ++step) {
        const double k1v = accel(d, v);
        const double k1d = v;
        const double k2v = accel(d + 0.5 * dt * k1d, v + 0.5 * dt * k1v);
        const double k2d = v + 0.5 * dt * k1v;
        const double k3v = accel(d + 0.5 * dt * k2d, v + 0.5 * dt * k2v);
        const double k3d = v + 0.5 * dt * k2v;
        const double k4v = accel(d + dt * k3d, v + dt * k3v);
        const double k4d = v + dt * k3v;
        d += dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        v = std::max(v, 0.3);
      }
      t += 1.0;
    }
    race.skiers.push_back(std::move(skier));
  }
  return race;
}

// Writes the dataset in the on-disk layout the CLI consumes, a ready-to-run
// config.json pointing at it, and the generative ground truth under
// ground_truth/.
inline void write_dataset(const SyntheticRace& race,
                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "trajectories");
  fs::create_directories(dir / "ground_truth");

  race.altitude.save(dir / "altitude.csv");

  nlohmann::json skiers = nlohmann::json::array();
  for (const SkierTruth& s : race.skiers) {
    nlohmann::json j = s.config.to_json();
    j["synthetic_mass"] = true;  // masses are placeholders, not measurements
    skiers.push_back(j);
  }
  {
    std::ofstream out(dir / "skiers.json");
    out << skiers.dump(2) << '\n';
  }

  nlohmann::json segments = nlohmann::json::array();
  for (const SegmentSpec& seg : race.segments) {
    segments.push_back(seg.to_json());
  }
  {
    std::ofstream out(dir / "segments.json");
    out << segments.dump(2) << '\n';
  }

  nlohmann::json trajectories = nlohmann::json::object();
  for (const SkierTruth& s : race.skiers) {
    const std::string file = "trajectories/" + s.config.id + ".csv";
    write_trajectory(dir / file, s.measured);
    trajectories[s.config.id] = file;

    write_trajectory(dir / ("ground_truth/clean_" + s.config.id + ".csv"),
                     s.clean);
    std::ofstream force_out(dir / ("ground_truth/force_" + s.config.id + ".csv"));
    force_out << "d,force\n";
    for (const auto& [d, f] : s.true_force) {
      force_out << trajgp::detail::format_double(d) << ','
                << trajgp::detail::format_double(f) << '\n';
    }
  }

  nlohmann::json meta = {
      {"synthetic", true},
      {"seed", race.options.seed},
      {"n_skiers", race.options.n_skiers},
      {"laps", race.options.laps},
      {"lap_length", race.options.lap_length},
      {"speed_noise_std", race.options.speed_noise_std},
      {"dynamics",
       {{"base_propulsion", race.options.base_propulsion},
        {"grade_compensation", race.options.grade_compensation},
        {"rolling_resistance", race.options.rolling_resistance},
        {"drag_coefficient", race.options.drag_coefficient}}}};
  nlohmann::json skier_truth = nlohmann::json::array();
  for (const SkierTruth& s : race.skiers) {
    skier_truth.push_back({{"id", s.config.id},
                           {"skill", s.skill},
                           {"lap_factors", s.lap_factors}});
  }
  meta["skiers"] = skier_truth;
  {
    std::ofstream out(dir / "ground_truth/meta.json");
    out << meta.dump(2) << '\n';
  }

  const nlohmann::json config = {
      {"altitude", "altitude.csv"},
      {"skiers", "skiers.json"},
      {"segments", "segments.json"},
      {"trajectories", trajectories},
      {"lap_length", race.options.lap_length},
      {"laps", race.options.laps},
      {"period", race.options.lap_length},
      {"grid_size", 500},
      {"grid_range", {0.0, race.options.laps * race.options.lap_length}},
      {"seed", race.options.seed},
      {"output_dir", "out"},
      {"max_train_points", 400},
      {"synthetic", true}};
  {
    std::ofstream out(dir / "config.json");
    out << config.dump(2) << '\n';
  }
}

}  // namespace trajgp::synthetic
