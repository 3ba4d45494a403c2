#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ldw/errors.hpp"

namespace ldw {

/// Sampling interval of every trace (10 Hz).
inline constexpr double kSampleInterval = 0.1;

/// Width of a standard lane; anchors the lane-width filter and the generator.
inline constexpr double kStandardLaneWidth = 3.7;

/// Dimension of the observation vector (v, psi, rho, dy, psidot).
inline constexpr std::size_t kObservationDim = 5;

/// Dimension of the observable block (v, psi, rho, dy).
inline constexpr std::size_t kObservableDim = 4;

inline const std::array<std::string, kObservationDim> kDimLabels = {
    "v", "psi", "rho", "dy", "psidot"};

/// One 10 Hz sample of lane-relative vehicle state.
///
/// `dy` is the lateral distance from the centre of gravity to the monitored
/// lane boundary: positive inside the lane, zero on the line, negative once
/// crossed. `psi` is the heading relative to the road, signed so that
/// `d(dy)/dt = v * sin(psi)`; a vehicle drifting towards the boundary has
/// `psi < 0`.
struct DrivingPoint {
  double t = 0.0;       // s from trace start
  double v = 0.0;       // m/s
  double psi = 0.0;     // rad
  double rho = 0.0;     // 1/m
  double dy = 0.0;      // m
  double psidot = 0.0;  // rad/s

  friend bool operator==(const DrivingPoint&, const DrivingPoint&) = default;
};

/// A DrivingPoint with the yaw rate removed; the HMM's observable state.
struct ObservablePoint {
  double v = 0.0;
  double psi = 0.0;
  double rho = 0.0;
  double dy = 0.0;

  friend bool operator==(const ObservablePoint&, const ObservablePoint&) = default;
};

inline ObservablePoint observable(const DrivingPoint& p) {
  return {p.v, p.psi, p.rho, p.dy};
}

inline Eigen::VectorXd to_vector(const DrivingPoint& p) {
  Eigen::VectorXd x(kObservationDim);
  x << p.v, p.psi, p.rho, p.dy, p.psidot;
  return x;
}

inline Eigen::VectorXd to_vector(const ObservablePoint& z) {
  Eigen::VectorXd x(kObservableDim);
  x << z.v, z.psi, z.rho, z.dy;
  return x;
}

/// Stacks points column-wise into a kObservationDim x n matrix.
inline Eigen::MatrixXd to_matrix(const std::vector<DrivingPoint>& points) {
  Eigen::MatrixXd x(kObservationDim, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = to_vector(points[i]);
  }
  return x;
}

// ---------------------------------------------------------------------------
// validation

struct ValidationResult {
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
  explicit operator bool() const noexcept { return ok(); }
};

inline constexpr std::string_view kViolationFinite = "finite fields";
inline constexpr std::string_view kViolationSpeed = "v >= 0";

inline ValidationResult validate_point(const DrivingPoint& p) {
  ValidationResult result;
  const bool finite = std::isfinite(p.t) && std::isfinite(p.v) &&
                      std::isfinite(p.psi) && std::isfinite(p.rho) &&
                      std::isfinite(p.dy) && std::isfinite(p.psidot);
  if (!finite) result.violations.emplace_back(kViolationFinite);
  // NaN compares false, so only a real negative speed lands here.
  if (p.v < 0.0) result.violations.emplace_back(kViolationSpeed);
  return result;
}

inline ValidationResult validate_point(const ObservablePoint& z) {
  return validate_point(DrivingPoint{0.0, z.v, z.psi, z.rho, z.dy, 0.0});
}

// ---------------------------------------------------------------------------
// configuration

/// Vehicle width D and CoG-to-front-axle distance l_f, both in metres.
struct VehicleGeometry {
  double width = 1.8;
  double cg_to_front_axle = 1.2;

  void validate() const {
    if (!(width > 0.0) || !std::isfinite(width) || !(cg_to_front_axle > 0.0) ||
        !std::isfinite(cg_to_front_axle)) {
      throw InvalidGeometry("vehicle width and cg_to_front_axle must be positive and finite");
    }
  }
};

/// Thresholds of the warning strategies. Defaults are the published ones:
/// tau = 1 s, gamma1 = -0.05 m, gamma2 = 0.1 m, q = 10 steps of 0.1 s.
struct WarningConfig {
  double tau = 1.0;
  double gamma1 = -0.05;
  double gamma2 = 0.1;
  std::size_t q = 10;
  double dt = kSampleInterval;

  void validate() const {
    if (!(tau > 0.0)) throw InvalidConfig("tau must be > 0");
    if (q < 1) throw InvalidConfig("q must be >= 1");
    if (!(dt > 0.0)) throw InvalidConfig("dt must be > 0");
    if (!(gamma1 <= gamma2)) throw InvalidConfig("gamma1 must be <= gamma2");
  }
};

// ---------------------------------------------------------------------------
// events

enum class Label { None, Ldb, Dcb, Unlabeled };

inline std::string_view to_string(Label label) {
  switch (label) {
    case Label::None: return "NONE";
    case Label::Ldb: return "LDB";
    case Label::Dcb: return "DCB";
    case Label::Unlabeled: return "UNLABELED";
  }
  return "UNLABELED";
}

inline std::optional<Label> parse_label(std::string_view text) {
  if (text == "NONE") return Label::None;
  if (text == "LDB") return Label::Ldb;
  if (text == "DCB") return Label::Dcb;
  if (text == "UNLABELED" || text.empty()) return Label::Unlabeled;
  return std::nullopt;
}

/// Where an event came from inside its source trace. Rows are 0-based data
/// rows (header excluded), `row_end` exclusive.
struct Provenance {
  std::string source;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Contiguous trace segment around a near-boundary episode.
struct Event {
  std::vector<DrivingPoint> points;
  std::vector<Label> labels;  // one per point
  std::string driver_id;
  Provenance provenance;

  double duration() const {
    return points.empty() ? 0.0 : points.back().t - points.front().t;
  }
  std::size_t size() const noexcept { return points.size(); }

  friend bool operator==(const Event&, const Event&) = default;
};

}  // namespace ldw
