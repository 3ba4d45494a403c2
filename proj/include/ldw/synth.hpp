#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldw/dataio.hpp"
#include "ldw/domain.hpp"
#include "ldw/errors.hpp"

namespace ldw {

/// Lateral driving style of one synthetic driver.
///
/// `preferred_offset` is measured from the lane centre towards the monitored
/// boundary, so a positive value hugs the line.
struct DriverProfile {
  std::string driver_id = "d1";
  double preferred_offset = 0.1;  // m
  double offset_jitter = 0.1;     // m, std of the slowly wandering setpoint
  double drift_rate = 1.0 / 40.0; // departure onsets per second
  double correction_prob = 0.7;   // P(DCB | departure)
  double speed_mean = 25.0;       // m/s
  double speed_std = 2.0;         // m/s
  double yaw_noise_std = 0.01;    // rad/s
  std::uint64_t seed = 1;

  void validate() const {
    auto bad = [](bool cond, const char* what) {
      if (cond) throw InvalidProfile(what);
    };
    bad(!(correction_prob >= 0.0 && correction_prob <= 1.0), "correction_prob must be in [0, 1]");
    bad(!(drift_rate >= 0.0) || !std::isfinite(drift_rate), "drift_rate must be >= 0");
    bad(!(drift_rate * kSampleInterval <= 1.0), "drift_rate too large for 10 Hz sampling");
    bad(!(offset_jitter >= 0.0) || !(speed_std >= 0.0) || !(yaw_noise_std >= 0.0), "standard deviations must be >= 0");
    bad(!(speed_mean > 0.0) || !std::isfinite(speed_mean), "speed_mean must be > 0");
    bad(!std::isfinite(preferred_offset) || !std::isfinite(offset_jitter) || !std::isfinite(speed_std) ||
            !std::isfinite(yaw_noise_std),
        "profile values must be finite");
    bad(driver_id.empty(), "driver_id must not be empty");
  }
};

struct GeneratorOptions {
  double kinematics_noise = 0.0;  // m, std of process noise on each dy increment
  double gamma1 = -0.05;          // LDB episodes end below this depth
  double gamma2 = 0.1;            // DCB episodes recover above this
};

struct Episode {
  Label kind = Label::None;
  double onset = 0.0;
  double peak = 0.0;  // time of the minimum dy
  double end = 0.0;   // last labeled sample
  std::optional<double> recovery;  // DCB only: first time dy climbs back above gamma2 after the peak
  double min_dy = 0.0;
};

/// Per-timestep ground truth of a synthetic trace.
struct GroundTruthLog {
  std::string driver_id;
  double t0 = 0.0;
  double dt = kSampleInterval;
  std::vector<Label> labels;
  std::vector<Episode> episodes;

  /// Label at time t, or None outside the log.
  Label at(double t) const {
    const double idx = std::round((t - t0) / dt);
    if (idx < 0.0 || idx >= static_cast<double>(labels.size())) return Label::None;
    return labels[static_cast<std::size_t>(idx)];
  }

  /// True when any sample in [t_begin, t_end] is labeled `label`.
  bool occurs(Label label, double t_begin, double t_end) const {
    const double first = std::max(0.0, std::ceil((t_begin - t0) / dt - 1e-9));
    const double last = std::min(static_cast<double>(labels.size()) - 1.0, std::floor((t_end - t0) / dt + 1e-9));
    for (double i = first; i <= last; i += 1.0) {
      if (labels[static_cast<std::size_t>(i)] == label) return true;
    }
    return false;
  }
};

struct GeneratedTrace {
  TraceFile trace;
  GroundTruthLog truth;
};

namespace synth_detail {

// Closed-loop lane keeping: second-order response with these parameters.
inline constexpr double kKeepFrequency = 0.5;  // rad/s
inline constexpr double kKeepDamping = 0.8;
inline constexpr double kCorrectFrequency = 1.0;
inline constexpr double kCorrectDamping = 0.9;
inline constexpr double kMaxCorrectionRate = 0.08;  // rad/s
inline constexpr double kHeadingGain = 1.0;          // 1/s while drifting
inline constexpr double kMaxDriftRate = 0.05;        // rad/s
inline constexpr double kDriftHeadingMin = 0.01;     // rad
inline constexpr double kDriftHeadingMax = 0.03;
inline constexpr double kCorrectionOnsetMin = 0.4;   // m
inline constexpr double kCorrectionOnsetMax = 1.0;
inline constexpr double kReactionDelayMin = 0.1;     // s
inline constexpr double kReactionDelayMax = 0.5;
inline constexpr double kDepartureDepthMin = 0.15;   // m below gamma1
inline constexpr double kDepartureDepthMax = 0.45;
inline constexpr double kCooldown = 5.0;             // s between episodes
inline constexpr double kOnsetMinDy = 0.9;           // m
inline constexpr double kSpeedTau = 30.0;            // s
inline constexpr double kOffsetTau = 20.0;           // s
inline constexpr double kCurvatureTau = 60.0;        // s
inline constexpr double kCurvatureStd = 3e-5;        // 1/m
inline constexpr double kCurvatureLimit = 9e-5;      // 1/m

inline double clamp(double x, double limit) { return std::clamp(x, -limit, limit); }

}  // namespace synth_detail

/// Simulates a labeled trace with the same point-mass kinematics the
/// predictor rolls out: dy += v sin(psi) dt, psi += psidot dt.
///
/// Lane keeping is a proportional-derivative yaw-rate controller towards the
/// driver's setpoint. Departures start as a Poisson process; the driver
/// turns towards the line and holds the heading. A DCB episode re-engages a
/// stiffer controller after a reaction delay once dy drops below a random
/// onset depth, and ends when the vehicle is heading back in above gamma2.
/// An LDB episode ends once dy is below gamma1 by a random margin; lane
/// keeping then resumes unlabeled.
inline GeneratedTrace generate_trace(const DriverProfile& profile, double duration,
                                     double lane_width = kStandardLaneWidth, const GeneratorOptions& options = {}) {
  using namespace synth_detail;
  profile.validate();
  if (!(duration >= 30.0)) throw InvalidProfile("duration must be >= 30 s");
  if (!(lane_width > 0.0)) throw InvalidProfile("lane_width must be > 0");
  if (!(options.kinematics_noise >= 0.0)) throw InvalidProfile("kinematics_noise must be >= 0");

  std::mt19937_64 rng(profile.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double dt = kSampleInterval;
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
  const double setpoint = lane_width / 2.0 - profile.preferred_offset;

  GeneratedTrace out;
  out.trace.header = kRequiredColumns;
  out.trace.header.insert(out.trace.header.end(), kOptionalColumns.begin(), kOptionalColumns.end());
  out.trace.source = profile.driver_id + ".csv";
  out.trace.rows.reserve(steps);
  out.truth.driver_id = profile.driver_id;
  out.truth.dt = dt;
  out.truth.labels.reserve(steps);

  enum class Phase { Keep, Drift, Correct };
  Phase phase = Phase::Keep;
  double v = profile.speed_mean;
  double psi = 0.0;
  double dy = setpoint;
  double rho = 0.0;
  double offset = 0.0;
  double since_episode = kCooldown;

  Episode episode;
  double drift_heading = 0.0;
  double correction_onset = 0.0;
  double reaction_left = 0.0;
  bool reacting = false;

  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;

    // Phase transitions use the state at t.
    if (phase == Phase::Keep && since_episode >= kCooldown && dy > kOnsetMinDy &&
        unit(rng) < profile.drift_rate * dt) {
      phase = Phase::Drift;
      episode = {};
      episode.kind = unit(rng) < profile.correction_prob ? Label::Dcb : Label::Ldb;
      episode.onset = t;
      episode.peak = t;
      episode.min_dy = dy;
      drift_heading = -uniform(kDriftHeadingMin, kDriftHeadingMax);
      correction_onset = uniform(kCorrectionOnsetMin, kCorrectionOnsetMax);
      reaction_left = uniform(kReactionDelayMin, kReactionDelayMax);
      reacting = false;
      if (episode.kind == Label::Ldb) correction_onset = options.gamma1 - uniform(kDepartureDepthMin, kDepartureDepthMax);
    }
    if (phase == Phase::Drift && episode.kind == Label::Dcb) {
      if (!reacting && dy < correction_onset) reacting = true;
      if (reacting) {
        reaction_left -= dt;
        if (reaction_left <= 0.0) phase = Phase::Correct;
      }
    }

    Label label = Label::None;
    if (phase != Phase::Keep) {
      label = episode.kind;
      if (dy < episode.min_dy) {
        episode.min_dy = dy;
        episode.peak = t;
      }
    }

    // Yaw-rate command.
    const double target = setpoint + offset;
    double psidot = 0.0;
    switch (phase) {
      case Phase::Keep: {
        const double kp = kKeepFrequency * kKeepFrequency / v;
        psidot = kp * (target - dy) - 2.0 * kKeepDamping * kKeepFrequency * psi;
        break;
      }
      case Phase::Drift:
        psidot = clamp(kHeadingGain * (drift_heading - psi), kMaxDriftRate);
        break;
      case Phase::Correct: {
        const double kp = kCorrectFrequency * kCorrectFrequency / v;
        psidot = clamp(kp * (target - dy) - 2.0 * kCorrectDamping * kCorrectFrequency * psi, kMaxCorrectionRate);
        break;
      }
    }
    psidot += profile.yaw_noise_std * gauss(rng);

    TraceRow row;
    row.point = {t, v, psi, rho, dy, psidot};
    row.turn_signal = false;
    row.lane_width = lane_width;
    row.label = label;
    out.trace.rows.push_back(row);
    out.truth.labels.push_back(label);

    // Episode termination after labeling this sample.
    bool finished = false;
    if (phase == Phase::Drift && episode.kind == Label::Ldb && dy < correction_onset) finished = true;
    if (phase == Phase::Correct) {
      if (!episode.recovery && t > episode.peak && dy > options.gamma2) episode.recovery = t;
      if (episode.recovery && psi > 0.0 && dy > std::max(options.gamma2, correction_onset)) finished = true;
    }
    if (finished) {
      episode.end = t;
      if (episode.kind == Label::Ldb) episode.recovery.reset();
      out.truth.episodes.push_back(episode);
      phase = Phase::Keep;
      since_episode = 0.0;
    } else if (phase == Phase::Keep) {
      since_episode += dt;
    }

    // Advance the state to t + dt.
    const double dy_next = dy + v * std::sin(psi) * dt + options.kinematics_noise * gauss(rng);
    psi += psidot * dt;
    dy = dy_next;
    const double v_noise = profile.speed_std * std::sqrt(2.0 * dt / kSpeedTau) * gauss(rng);
    v = std::max(1.0, v + (profile.speed_mean - v) * dt / kSpeedTau + v_noise);
    const double offset_noise = profile.offset_jitter * std::sqrt(2.0 * dt / kOffsetTau) * gauss(rng);
    offset += -offset * dt / kOffsetTau + offset_noise;
    const double rho_noise = kCurvatureStd * std::sqrt(2.0 * dt / kCurvatureTau) * gauss(rng);
    rho = clamp(rho - rho * dt / kCurvatureTau + rho_noise, kCurvatureLimit);
  }

  // An episode still open at the end of the trace is relabeled as lane keeping.
  if (phase != Phase::Keep) {
    for (std::size_t i = out.truth.labels.size(); i-- > 0;) {
      if (out.truth.labels[i] != episode.kind) break;
      out.truth.labels[i] = Label::None;
      out.trace.rows[i].label = Label::None;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// corpus

/// Ten drivers spanning centre-keeping to boundary-hugging styles.
inline std::vector<DriverProfile> default_profiles(std::uint64_t seed = 1) {
  struct Style {
    double offset, jitter, rate, correction, speed, noise;
  };
  const Style styles[] = {
      {0.35, 0.10, 1.0 / 35.0, 0.70, 24.0, 0.010}, {0.55, 0.12, 1.0 / 30.0, 0.75, 22.0, 0.012},
      {0.75, 0.10, 1.0 / 30.0, 0.65, 25.0, 0.012}, {0.80, 0.15, 1.0 / 25.0, 0.60, 26.0, 0.014},
      {0.05, 0.08, 1.0 / 45.0, 0.80, 27.0, 0.008}, {0.00, 0.08, 1.0 / 45.0, 0.80, 28.0, 0.008},
      {0.60, 0.12, 1.0 / 30.0, 0.70, 23.0, 0.012}, {0.45, 0.10, 1.0 / 35.0, 0.75, 25.0, 0.010},
      {0.50, 0.10, 1.0 / 35.0, 0.65, 24.0, 0.011}, {0.30, 0.10, 1.0 / 40.0, 0.70, 25.0, 0.010},
  };
  std::vector<DriverProfile> out;
  for (std::size_t i = 0; i < std::size(styles); ++i) {
    const auto& s = styles[i];
    DriverProfile p;
    p.driver_id = "d" + std::to_string(i + 1);
    p.preferred_offset = s.offset;
    p.offset_jitter = s.jitter;
    p.drift_rate = s.rate;
    p.correction_prob = s.correction;
    p.speed_mean = s.speed;
    p.speed_std = 2.0;
    p.yaw_noise_std = s.noise;
    p.seed = seed * 1000 + i + 1;
    out.push_back(p);
  }
  return out;
}

inline void to_json(nlohmann::json& j, const DriverProfile& p) {
  j = nlohmann::json{{"driver_id", p.driver_id},       {"preferred_offset", p.preferred_offset},
                     {"offset_jitter", p.offset_jitter}, {"drift_rate", p.drift_rate},
                     {"correction_prob", p.correction_prob}, {"speed_mean", p.speed_mean},
                     {"speed_std", p.speed_std},         {"yaw_noise_std", p.yaw_noise_std},
                     {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, DriverProfile& p) {
  const DriverProfile d;
  p.driver_id = j.value("driver_id", d.driver_id);
  p.preferred_offset = j.value("preferred_offset", d.preferred_offset);
  p.offset_jitter = j.value("offset_jitter", d.offset_jitter);
  p.drift_rate = j.value("drift_rate", d.drift_rate);
  p.correction_prob = j.value("correction_prob", d.correction_prob);
  p.speed_mean = j.value("speed_mean", d.speed_mean);
  p.speed_std = j.value("speed_std", d.speed_std);
  p.yaw_noise_std = j.value("yaw_noise_std", d.yaw_noise_std);
  p.seed = j.value("seed", d.seed);
}

inline void to_json(nlohmann::json& j, const Episode& e) {
  j = nlohmann::json{{"kind", to_string(e.kind)}, {"onset", e.onset}, {"peak", e.peak},
                     {"end", e.end},              {"min_dy", e.min_dy}};
  j["recovery"] = e.recovery ? nlohmann::json(*e.recovery) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Episode& e) {
  e.kind = parse_label(j.at("kind").get<std::string>()).value_or(Label::None);
  j.at("onset").get_to(e.onset);
  j.at("peak").get_to(e.peak);
  j.at("end").get_to(e.end);
  j.at("min_dy").get_to(e.min_dy);
  if (j.contains("recovery") && !j.at("recovery").is_null()) e.recovery = j.at("recovery").get<double>();
  else e.recovery.reset();
}

inline void to_json(nlohmann::json& j, const GroundTruthLog& g) {
  std::vector<std::string> labels;
  labels.reserve(g.labels.size());
  for (auto l : g.labels) labels.emplace_back(to_string(l));
  j = nlohmann::json{{"driver_id", g.driver_id}, {"t0", g.t0},          {"dt", g.dt},
                     {"labels", std::move(labels)}, {"episodes", g.episodes}};
}

inline void from_json(const nlohmann::json& j, GroundTruthLog& g) {
  j.at("driver_id").get_to(g.driver_id);
  j.at("t0").get_to(g.t0);
  j.at("dt").get_to(g.dt);
  g.labels.clear();
  for (const auto& s : j.at("labels")) g.labels.push_back(parse_label(s.get<std::string>()).value_or(Label::None));
  j.at("episodes").get_to(g.episodes);
}

/// Ground truth recovered from a labeled trace's label column.
inline std::optional<GroundTruthLog> truth_from_trace(const TraceFile& trace, const std::string& driver_id) {
  if (!trace.labeled() || trace.rows.empty()) return std::nullopt;
  GroundTruthLog g;
  g.driver_id = driver_id;
  g.t0 = trace.rows.front().point.t;
  for (const auto& r : trace.rows) g.labels.push_back(r.label == Label::Unlabeled ? Label::None : r.label);
  return g;
}

struct CorpusEntry {
  std::string driver_id;
  std::string trace_file;
  std::string truth_file;
  std::uint64_t seed = 0;
};

struct CorpusManifest {
  double duration = 0.0;
  double lane_width = kStandardLaneWidth;
  double kinematics_noise = 0.0;
  std::vector<DriverProfile> profiles;
  std::vector<CorpusEntry> entries;
};

inline void to_json(nlohmann::json& j, const CorpusManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"driver_id", e.driver_id}, {"trace", e.trace_file}, {"truth", e.truth_file}, {"seed", e.seed}});
  }
  j = nlohmann::json{{"duration", m.duration},
                     {"lane_width", m.lane_width},
                     {"kinematics_noise", m.kinematics_noise},
                     {"profiles", m.profiles},
                     {"drivers", std::move(entries)}};
}

inline void from_json(const nlohmann::json& j, CorpusManifest& m) {
  j.at("duration").get_to(m.duration);
  j.at("lane_width").get_to(m.lane_width);
  m.kinematics_noise = j.value("kinematics_noise", 0.0);
  j.at("profiles").get_to(m.profiles);
  m.entries.clear();
  for (const auto& e : j.at("drivers")) {
    m.entries.push_back({e.at("driver_id").get<std::string>(), e.at("trace").get<std::string>(),
                         e.value("truth", std::string{}), e.value("seed", std::uint64_t{0})});
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = 2) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << j.dump(indent) << '\n';
  if (!out) throw IoFailure("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoFailure("invalid JSON in " + path.string() + ": " + e.what());
  }
}

/// One trace CSV and ground-truth sidecar per profile, plus manifest.json.
inline CorpusManifest generate_corpus(const std::vector<DriverProfile>& profiles, double duration,
                                      const std::filesystem::path& dir, double lane_width = kStandardLaneWidth,
                                      const GeneratorOptions& options = {}) {
  if (profiles.empty()) throw InvalidProfile("corpus needs at least one profile");
  for (const auto& p : profiles) p.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create corpus directory " + dir.string() + ": " + ec.message());

  CorpusManifest manifest;
  manifest.duration = duration;
  manifest.lane_width = lane_width;
  manifest.kinematics_noise = options.kinematics_noise;
  manifest.profiles = profiles;
  for (const auto& profile : profiles) {
    auto generated = generate_trace(profile, duration, lane_width, options);
    const std::string trace_name = profile.driver_id + ".csv";
    const std::string truth_name = profile.driver_id + ".truth.json";
    write_trace(dir / trace_name, generated.trace);
    write_json_file(dir / truth_name, generated.truth, -1);
    manifest.entries.push_back({profile.driver_id, trace_name, truth_name, profile.seed});
  }
  write_json_file(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace ldw
