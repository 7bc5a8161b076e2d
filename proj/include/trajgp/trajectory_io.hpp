#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trajgp/errors.hpp"

namespace trajgp {

// One positioned sample: time, WGS coordinates (carried through, never used
// in the math), cumulative distance on track and ground speed. Sampling is
// nominally 1 Hz.
struct TrajectorySample {
  double t = 0.0;    // seconds since race start
  double lat = 0.0;  // WGS degrees
  double lon = 0.0;  // WGS degrees
  double d = 0.0;    // meters, cumulative over the whole race
  double v = 0.0;    // m/s, >= 0
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  int dropped_nonmonotonic = 0;   // samples removed to keep d non-decreasing
  int collapsed_duplicates = 0;   // duplicate timestamps collapsed (last kept)

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  Eigen::VectorXd distances() const {
    Eigen::VectorXd d(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) d[static_cast<Eigen::Index>(i)] = samples[i].d;
    return d;
  }
  Eigen::VectorXd speeds() const {
    Eigen::VectorXd v(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) v[static_cast<Eigen::Index>(i)] = samples[i].v;
    return v;
  }
};

namespace detail {

// Canonical decimal formatting: shortest representation that round-trips
// the double exactly, '.' separator, locale independent.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view field, int line_number) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw IoError("line " + std::to_string(line_number) +
                  ": cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

// Reads a trajectory CSV with header `t,lat,lon,d,v`. Samples are sorted by
// timestamp, duplicated timestamps collapsed keeping the last row, and
// samples that would make d decrease are dropped (counted in the result).
inline Trajectory load_trajectory(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("trajectory file is empty");
  }
  if (detail::strip_cr(line) != "t,lat,lon,d,v") {
    throw IoError("trajectory file must start with header 't,lat,lon,d,v', got '" +
                  line + "'");
  }
  std::vector<TrajectorySample> raw;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string_view stripped = detail::strip_cr(line);
    if (stripped.empty()) continue;
    const auto fields = detail::split_csv(stripped);
    if (fields.size() != 5) {
      throw IoError("line " + std::to_string(line_number) + ": expected 5 fields, got " +
                    std::to_string(fields.size()));
    }
    TrajectorySample s;
    s.t = detail::parse_double(fields[0], line_number);
    s.lat = detail::parse_double(fields[1], line_number);
    s.lon = detail::parse_double(fields[2], line_number);
    s.d = detail::parse_double(fields[3], line_number);
    s.v = detail::parse_double(fields[4], line_number);
    if (!std::isfinite(s.t) || !std::isfinite(s.d) || !std::isfinite(s.v)) {
      throw IoError("line " + std::to_string(line_number) + ": non-finite value");
    }
    if (s.v < 0.0) {
      throw IoError("line " + std::to_string(line_number) + ": negative speed");
    }
    raw.push_back(s);
  }
  if (raw.empty()) {
    throw IoError("trajectory file has no samples");
  }

  std::stable_sort(raw.begin(), raw.end(),
                   [](const TrajectorySample& a, const TrajectorySample& b) {
                     return a.t < b.t;
                   });
  Trajectory traj;
  traj.samples.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i + 1 < raw.size() && raw[i + 1].t == raw[i].t) {
      ++traj.collapsed_duplicates;
      continue;  // keep the last row of a duplicated timestamp
    }
    if (!traj.samples.empty() && raw[i].d < traj.samples.back().d) {
      ++traj.dropped_nonmonotonic;
      continue;
    }
    traj.samples.push_back(raw[i]);
  }
  return traj;
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open trajectory file " + path.string());
  }
  try {
    return load_trajectory(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_trajectory(std::ostream& out, const Trajectory& traj) {
  out << "t,lat,lon,d,v\n";
  for (const TrajectorySample& s : traj.samples) {
    out << detail::format_double(s.t) << ',' << detail::format_double(s.lat)
        << ',' << detail::format_double(s.lon) << ',' << detail::format_double(s.d)
        << ',' << detail::format_double(s.v) << '\n';
  }
}

inline void write_trajectory(const std::filesystem::path& path,
                             const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write trajectory file " + path.string());
  }
  write_trajectory(out, traj);
}

struct AltitudePoint {
  double d_lap = 0.0;  // within-lap distance, meters
  double h = 0.0;      // altitude, meters
};

// Piecewise-linear altitude over one lap, [0, lap_length]. The incline
// angle is piecewise constant between profile points.
class AltitudeProfile {
 public:
  static AltitudeProfile from_points(std::vector<AltitudePoint> points) {
    if (points.size() < 2) {
      throw InvalidInputError("altitude profile needs at least 2 points");
    }
    if (points.front().d_lap != 0.0) {
      throw InvalidInputError("altitude profile must start at within-lap distance 0");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].d_lap > points[i - 1].d_lap)) {
        throw InvalidInputError("altitude profile distances must be strictly increasing");
      }
    }
    AltitudeProfile profile;
    profile.points_ = std::move(points);
    return profile;
  }

  static AltitudeProfile load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != "d,h") {
      throw IoError("altitude file must start with header 'd,h'");
    }
    std::vector<AltitudePoint> points;
    int line_number = 1;
    while (std::getline(in, line)) {
      ++line_number;
      const std::string_view stripped = detail::strip_cr(line);
      if (stripped.empty()) continue;
      const auto fields = detail::split_csv(stripped);
      if (fields.size() != 2) {
        throw IoError("line " + std::to_string(line_number) + ": expected 2 fields");
      }
      points.push_back({detail::parse_double(fields[0], line_number),
                        detail::parse_double(fields[1], line_number)});
    }
    return from_points(std::move(points));
  }

  static AltitudeProfile load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw IoError("cannot open altitude file " + path.string());
    }
    try {
      return load(in);
    } catch (const IoError& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }

  void save(std::ostream& out) const {
    out << "d,h\n";
    for (const AltitudePoint& p : points_) {
      out << detail::format_double(p.d_lap) << ',' << detail::format_double(p.h)
          << '\n';
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
      throw IoError("cannot write altitude file " + path.string());
    }
    save(out);
  }

  const std::vector<AltitudePoint>& points() const { return points_; }
  double lap_length() const { return points_.back().d_lap; }

  // Signed incline angle, positive uphill: sin(phi) = dh/dd over the
  // bracketing interval, with dd the along-track distance, so arcsin is
  // exact rather than a small-angle approximation.
  double incline_angle(double d_lap) const {
    const auto& seg = interval(d_lap);
    const double sin_phi =
        std::clamp((seg.second.h - seg.first.h) /
                       (seg.second.d_lap - seg.first.d_lap),
                   -1.0, 1.0);
    return std::asin(sin_phi);
  }

  // Linear interpolation of altitude (used by the sample-data generator).
  double altitude(double d_lap) const {
    const auto& seg = interval(d_lap);
    const double w =
        (d_lap - seg.first.d_lap) / (seg.second.d_lap - seg.first.d_lap);
    return seg.first.h + w * (seg.second.h - seg.first.h);
  }

 private:
  std::pair<const AltitudePoint&, const AltitudePoint&> interval(
      double d_lap) const {
    if (!(d_lap >= points_.front().d_lap && d_lap <= points_.back().d_lap)) {
      throw InvalidInputError("within-lap distance " + std::to_string(d_lap) +
                              " is outside the altitude profile [0, " +
                              std::to_string(lap_length()) + "]");
    }
    auto it = std::upper_bound(
        points_.begin(), points_.end(), d_lap,
        [](double value, const AltitudePoint& p) { return value < p.d_lap; });
    if (it == points_.end()) --it;  // query exactly at the last point
    const std::size_t hi = static_cast<std::size_t>(it - points_.begin());
    return {points_[hi - 1], points_[hi]};
  }

  std::vector<AltitudePoint> points_;
};

enum class SegmentKind { Uphill, Downhill };

inline std::string to_string(SegmentKind kind) {
  return kind == SegmentKind::Uphill ? "uphill" : "downhill";
}

inline SegmentKind segment_kind_from_string(const std::string& name) {
  if (name == "uphill") return SegmentKind::Uphill;
  if (name == "downhill") return SegmentKind::Downhill;
  throw ConfigError("segment kind must be 'uphill' or 'downhill', got '" + name + "'");
}

// A named within-lap track interval, e.g. the killer hill.
struct SegmentSpec {
  std::string name;
  double d_start = 0.0;
  double d_end = 0.0;
  SegmentKind kind = SegmentKind::Uphill;
  double lap_length = 0.0;

  void validate() const {
    if (!(0.0 <= d_start && d_start < d_end && d_end <= lap_length)) {
      throw InvalidInputError("segment '" + name +
                              "': need 0 <= d_start < d_end <= lap_length");
    }
  }

  nlohmann::json to_json() const {
    return {{"name", name},
            {"d_start", d_start},
            {"d_end", d_end},
            {"kind", to_string(kind)},
            {"lap_length", lap_length}};
  }

  static SegmentSpec from_json(const nlohmann::json& j) {
    try {
      SegmentSpec seg;
      seg.name = j.at("name").get<std::string>();
      seg.d_start = j.at("d_start").get<double>();
      seg.d_end = j.at("d_end").get<double>();
      seg.kind = segment_kind_from_string(j.at("kind").get<std::string>());
      seg.lap_length = j.at("lap_length").get<double>();
      seg.validate();
      return seg;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid segment JSON: ") + e.what());
    }
  }
};

struct SkierConfig {
  std::string id;
  double mass = 0.0;  // kg
  std::string team;

  void validate() const {
    if (!(mass > 0.0)) {
      throw InvalidInputError("skier '" + id + "': mass must be > 0");
    }
  }

  nlohmann::json to_json() const {
    return {{"id", id}, {"mass", mass}, {"team", team}};
  }

  static SkierConfig from_json(const nlohmann::json& j) {
    try {
      SkierConfig config;
      config.id = j.at("id").get<std::string>();
      config.mass = j.at("mass").get<double>();
      config.team = j.value("team", std::string{});
      config.validate();
      return config;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid skier JSON: ") + e.what());
    }
  }
};

// Within-lap distance for a cumulative race distance.
inline double within_lap(double d, double lap_length) {
  if (!(lap_length > 0.0)) {
    throw InvalidInputError("within_lap: lap_length must be > 0");
  }
  double r = std::fmod(d, lap_length);
  if (r < 0.0) r += lap_length;
  return r;
}

// 1-based lap index for a cumulative race distance.
inline int lap_of(double d, double lap_length) {
  return static_cast<int>(std::floor(d / lap_length)) + 1;
}

// Samples with (lap-1)*lap_length + d_start <= d <= (lap-1)*lap_length +
// d_end. An empty result is not an error; the caller decides.
inline Trajectory extract_segment(const Trajectory& traj, const SegmentSpec& seg,
                                  int lap) {
  seg.validate();
  if (lap < 1) {
    throw InvalidInputError("extract_segment: lap index must be >= 1");
  }
  const double lo = (lap - 1) * seg.lap_length + seg.d_start;
  const double hi = (lap - 1) * seg.lap_length + seg.d_end;
  Trajectory out;
  for (const TrajectorySample& s : traj.samples) {
    if (s.d >= lo && s.d <= hi) {
      out.samples.push_back(s);
    }
  }
  return out;
}

}  // namespace trajgp
