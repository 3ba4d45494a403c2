#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ldw/domain.hpp"
#include "ldw/errors.hpp"
#include "ldw/predictor.hpp"

namespace ldw {

inline constexpr double kInfiniteTlc = std::numeric_limits<double>::infinity();

enum class Strategy { BasicTlc, TlcPdm, External };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::BasicTlc: return "BASIC_TLC";
    case Strategy::TlcPdm: return "TLC_PDM";
    case Strategy::External: return "EXTERNAL";
  }
  return "EXTERNAL";
}

struct WarningDecision {
  double t = 0.0;
  Strategy strategy = Strategy::BasicTlc;
  bool fired = false;
  double tlc = kInfiniteTlc;
  // TLC-PDM only: TLC below tau, predicted minimum below gamma1, predicted
  // terminal displacement below gamma2.
  std::array<bool, 3> conditions{false, false, false};
};

/// Time to lane crossing for a vehicle `dy` metres from the line, heading
/// towards it at `heading` rad:
///   (dy - (D/2 - l_f tan(heading))) / (v sin(heading)).
/// +inf when v sin(heading) <= 0; 0 when the numerator is not positive.
inline double time_to_lane_crossing(double dy, double heading, double v, const VehicleGeometry& geometry) {
  geometry.validate();
  const double approach = v * std::sin(heading);
  if (!(approach > 0.0)) return kInfiniteTlc;
  const double distance = dy - (geometry.width / 2.0 - geometry.cg_to_front_axle * std::tan(heading));
  if (!(distance > 0.0)) return 0.0;
  return distance / approach;
}

/// TLC of a driving point. In the lane frame dy shrinks when psi < 0, so the
/// heading towards the monitored line is -psi.
inline double compute_tlc(const DrivingPoint& p, const VehicleGeometry& geometry) {
  return time_to_lane_crossing(p.dy, -p.psi, p.v, geometry);
}

/// Fires iff tlc < tau.
inline WarningDecision basic_alarm(double tlc, const WarningConfig& config, double t = 0.0) {
  WarningDecision d;
  d.t = t;
  d.strategy = Strategy::BasicTlc;
  d.tlc = tlc;
  d.fired = tlc < config.tau;
  return d;
}

/// TLC-PDM on precomputed pieces: `predicted` holds dy at t+dt..t+q*dt and
/// must have exactly config.q entries. The minimum includes `dy_now`.
inline WarningDecision pdm_alarm(double t, double tlc, double dy_now, std::span<const double> predicted,
                                 const WarningConfig& config) {
  if (predicted.size() != config.q) {
    throw HorizonMismatch("predicted horizon " + std::to_string(predicted.size()) + " != q " +
                          std::to_string(config.q));
  }
  WarningDecision d;
  d.t = t;
  d.strategy = Strategy::TlcPdm;
  d.tlc = tlc;
  const double lowest = std::min(dy_now, *std::min_element(predicted.begin(), predicted.end()));
  d.conditions = {tlc < config.tau, lowest < config.gamma1, predicted.back() < config.gamma2};
  d.fired = d.conditions[0] && d.conditions[1] && d.conditions[2];
  return d;
}

inline WarningDecision pdm_alarm(const DrivingPoint& p, const PredictedPath& path, const VehicleGeometry& geometry,
                                 const WarningConfig& config) {
  return pdm_alarm(p.t, compute_tlc(p, geometry), p.dy, path.dy_hat, config);
}

// ---------------------------------------------------------------------------
// third-party strategies

/// Pure per-timestep decision: (point, predicted path, tlc) -> fire?
using ExternalDecisionFn = std::function<bool(const DrivingPoint&, const PredictedPath&, double)>;

struct StrategyHandle {
  std::size_t index = 0;
  friend bool operator==(const StrategyHandle&, const StrategyHandle&) = default;
};

class StrategyRegistry {
 public:
  StrategyHandle add(std::string name, ExternalDecisionFn fn) {
    if (!fn) throw InvalidConfig("external strategy '" + name + "' has no decision function");
    if (by_name_.contains(name)) throw DuplicateName("strategy '" + name + "' already registered");
    StrategyHandle handle{entries_.size()};
    by_name_.emplace(name, handle.index);
    entries_.push_back({std::move(name), std::move(fn)});
    return handle;
  }

  WarningDecision evaluate(StrategyHandle handle, const DrivingPoint& p, const PredictedPath& path,
                           double tlc) const {
    WarningDecision d;
    d.t = p.t;
    d.strategy = Strategy::External;
    d.tlc = tlc;
    d.fired = entries_.at(handle.index).fn(p, path, tlc);
    return d;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(StrategyHandle handle) const { return entries_.at(handle.index).name; }
  std::vector<StrategyHandle> handles() const {
    std::vector<StrategyHandle> out;
    for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back({i});
    return out;
  }

 private:
  struct Entry {
    std::string name;
    ExternalDecisionFn fn;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

inline StrategyHandle register_external_strategy(StrategyRegistry& registry, std::string name,
                                                 ExternalDecisionFn fn) {
  return registry.add(std::move(name), std::move(fn));
}

}  // namespace ldw
