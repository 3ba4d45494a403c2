#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldw/domain.hpp"
#include "ldw/errors.hpp"

namespace ldw {

/// Anything that filters observable states and regresses the yaw rate from
/// them. PdmModel is the production model; tests plug in closed-form stubs.
template <typename M>
concept YawRateModel = requires(const M& m, const ObservablePoint& zeta) {
  m.init(zeta);
  { m.advance(m.init(zeta), zeta) } -> std::same_as<decltype(m.init(zeta))>;
  { m.yaw_rate(m.init(zeta), zeta) } -> std::convertible_to<double>;
};

template <YawRateModel M>
using model_state_t = decltype(std::declval<const M&>().init(std::declval<const ObservablePoint&>()));

struct PredictionRequest {
  std::vector<ObservablePoint> history;  // ends with the observable part of `current`
  DrivingPoint current;
  std::size_t q = 10;
  double dt = kSampleInterval;
};

/// q-step open-loop rollout; entry i is the state at t + (i+1) dt.
struct PredictedPath {
  std::vector<double> dy_hat;
  std::vector<double> psi_hat;
  std::vector<double> psidot_hat;

  std::size_t horizon() const noexcept { return dy_hat.size(); }
};

/// Rolls the point-mass kinematics forward from an already filtered state.
///
/// The first step uses the measured yaw rate of `current`; later steps use
/// the model's conditional yaw rate at the propagated state. Speed and
/// curvature stay at their current values.
template <YawRateModel M>
PredictedPath rollout(model_state_t<M> state, const DrivingPoint& current, std::size_t q, double dt,
                      const M& model) {
  if (q < 1) throw InvalidRequest("prediction horizon q must be >= 1");
  if (!(dt > 0.0)) throw InvalidRequest("dt must be > 0");
  PredictedPath path;
  path.dy_hat.reserve(q);
  path.psi_hat.reserve(q);
  path.psidot_hat.reserve(q);

  const double v = current.v;
  const double rho = current.rho;
  double psi = current.psi;
  double dy = current.dy;
  double psidot = current.psidot;
  for (std::size_t i = 0; i < q; ++i) {
    const double psi_next = psi + psidot * dt;
    const double dy_next = dy + v * std::sin(psi) * dt;
    const ObservablePoint zeta{v, psi_next, rho, dy_next};
    state = model.advance(state, zeta);
    psidot = model.yaw_rate(state, zeta);
    path.dy_hat.push_back(dy_next);
    path.psi_hat.push_back(psi_next);
    path.psidot_hat.push_back(psidot);
    psi = psi_next;
    dy = dy_next;
  }
  return path;
}

/// Filters the whole history, then rolls out q steps.
template <YawRateModel M>
PredictedPath predict_path(const PredictionRequest& request, const M& model) {
  if (request.history.empty()) throw InvalidRequest("prediction history is empty");
  if (!validate_point(request.current)) throw InvalidRequest("current driving point is invalid");
  for (const auto& zeta : request.history) {
    if (!validate_point(zeta)) throw InvalidRequest("history contains an invalid point");
  }
  auto state = model.init(request.history.front());
  for (std::size_t i = 1; i < request.history.size(); ++i) state = model.advance(state, request.history[i]);
  return rollout<M>(std::move(state), request.current, request.q, request.dt, model);
}

/// Mean absolute error over the horizon.
inline double prediction_error(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw LengthMismatch("predicted horizon " + std::to_string(predicted.size()) + " vs actual " +
                         std::to_string(actual.size()));
  }
  if (predicted.empty()) throw LengthMismatch("empty prediction horizon");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += std::abs(predicted[i] - actual[i]);
  return total / static_cast<double>(predicted.size());
}

inline double prediction_error(const PredictedPath& predicted, std::span<const double> actual) {
  return prediction_error(std::span<const double>(predicted.dy_hat), actual);
}

}  // namespace ldw
