#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ldw/domain.hpp"
#include "ldw/errors.hpp"
#include "ldw/gmm.hpp"

namespace ldw {

// ---------------------------------------------------------------------------
// mode assignment and transition counting

/// Index (0-based) of the component with the highest unweighted density at
/// `x`. Ties resolve to the lowest index.
inline std::size_t assign_mode(const Eigen::VectorXd& x, const std::vector<GaussianDensity>& components) {
  std::size_t best = 0;
  double best_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < components.size(); ++k) {
    const double lp = components[k].log_pdf(x);
    if (lp > best_log) {
      best_log = lp;
      best = k;
    }
  }
  return best;
}

inline std::size_t assign_mode(const Eigen::VectorXd& x, const GmmModel& gmm) {
  return assign_mode(x, component_densities(gmm));
}

/// Modes of every column of `data`.
inline std::vector<std::size_t> assign_modes(const Eigen::MatrixXd& data, const GmmModel& gmm) {
  const auto densities = component_densities(gmm);
  Eigen::MatrixXd logp(data.cols(), static_cast<Eigen::Index>(densities.size()));
  for (std::size_t k = 0; k < densities.size(); ++k) {
    logp.col(static_cast<Eigen::Index>(k)) = densities[k].log_pdf_columns(data);
  }
  std::vector<std::size_t> out(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index t = 0; t < data.cols(); ++t) {
    std::size_t best = 0;
    for (Eigen::Index k = 1; k < logp.cols(); ++k) {
      if (logp(t, k) > logp(t, static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(k);
    }
    out[static_cast<std::size_t>(t)] = best;
  }
  return out;
}

/// Row-stochastic transition matrix with the raw counts it was built from.
struct TransitionMatrix {
  Eigen::MatrixXd entries;                       // alpha(i, j)
  std::vector<std::vector<std::uint64_t>> counts;  // F(i, j)
  std::vector<std::uint64_t> state_totals;         // n_i

  std::size_t size() const noexcept { return state_totals.size(); }
};

namespace detail {

inline TransitionMatrix normalize_counts(std::vector<std::vector<std::uint64_t>> counts) {
  const std::size_t k = counts.size();
  TransitionMatrix out;
  out.entries = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  out.state_totals.assign(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uint64_t total = 0;
    for (std::uint64_t c : counts[i]) total += c;
    out.state_totals[i] = total;
    for (std::size_t j = 0; j < k; ++j) {
      // Unvisited modes fall back to a uniform row.
      out.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          total > 0 ? static_cast<double>(counts[i][j]) / static_cast<double>(total)
                    : 1.0 / static_cast<double>(k);
    }
  }
  out.counts = std::move(counts);
  return out;
}

inline void count_pairs(std::span<const std::size_t> modes, std::vector<std::vector<std::uint64_t>>& counts) {
  const std::size_t k = counts.size();
  for (std::size_t t = 0; t + 1 < modes.size(); ++t) {
    if (modes[t] >= k || modes[t + 1] >= k) {
      throw InvalidConfig("mode index " + std::to_string(std::max(modes[t], modes[t + 1])) +
                          " out of range for K=" + std::to_string(k));
    }
    ++counts[modes[t]][modes[t + 1]];
  }
}

}  // namespace detail

/// Counts consecutive mode pairs and normalises each row by the number of
/// times its mode appears in positions 0..len-2.
inline TransitionMatrix estimate_transitions(std::span<const std::size_t> modes, std::size_t k) {
  if (modes.size() < 2) throw SequenceTooShort("transition estimation needs at least two modes");
  if (k == 0) throw InvalidConfig("K must be >= 1");
  std::vector<std::vector<std::uint64_t>> counts(k, std::vector<std::uint64_t>(k, 0));
  detail::count_pairs(modes, counts);
  return detail::normalize_counts(std::move(counts));
}

/// Pools pair counts over several independent sequences; pairs never span
/// two sequences.
inline TransitionMatrix estimate_transitions(const std::vector<std::vector<std::size_t>>& sequences, std::size_t k) {
  if (k == 0) throw InvalidConfig("K must be >= 1");
  std::vector<std::vector<std::uint64_t>> counts(k, std::vector<std::uint64_t>(k, 0));
  bool any = false;
  for (const auto& seq : sequences) {
    if (seq.size() >= 2) any = true;
    detail::count_pairs(seq, counts);
  }
  if (!any) throw SequenceTooShort("no sequence has at least two modes");
  return detail::normalize_counts(std::move(counts));
}

// ---------------------------------------------------------------------------
// personalised driver model

/// Mixing weights over the hidden modes after observing zeta_1..zeta_t.
struct ForwardState {
  Eigen::VectorXd beta;
  std::size_t t = 0;
};

/// GMM over (v, psi, rho, dy, psidot) with an HMM layer over its components.
///
/// The observable block is (v, psi, rho, dy); psidot is the hidden state
/// regressed from it. Per-component conditional blocks are precomputed at
/// construction.
class PdmModel {
 public:
  static constexpr std::array<Eigen::Index, kObservableDim> kObservableIndices = {0, 1, 2, 3};
  static constexpr Eigen::Index kHiddenIndex = 4;

  PdmModel(GmmModel gmm, TransitionMatrix transitions)
      : gmm_(std::move(gmm)), transitions_(std::move(transitions)) {
    if (gmm_.dim() != kObservationDim) {
      throw InvalidConfig("PDM needs a " + std::to_string(kObservationDim) + "-dimensional GMM");
    }
    if (transitions_.size() != gmm_.components() ||
        transitions_.entries.rows() != static_cast<Eigen::Index>(gmm_.components())) {
      throw InvalidConfig("transition matrix size does not match the GMM");
    }
    const auto n_obs = static_cast<Eigen::Index>(kObservableDim);
    for (std::size_t k = 0; k < gmm_.components(); ++k) {
      const Eigen::VectorXd& mu = gmm_.means[k];
      const Eigen::MatrixXd& sigma = gmm_.covariances[k];
      Eigen::VectorXd mu_obs = mu.head(n_obs);
      const Eigen::MatrixXd sigma_oo = sigma.topLeftCorner(n_obs, n_obs);
      const Eigen::VectorXd sigma_oh = sigma.block(0, kHiddenIndex, n_obs, 1);
      GaussianDensity marginal(mu_obs, sigma_oo);
      // Sigma_oo^-1 Sigma_oh via the cached Cholesky factor.
      Eigen::VectorXd coeff = sigma_oh;
      const auto& lower = marginal.cholesky_lower();
      lower.triangularView<Eigen::Lower>().solveInPlace(coeff);
      lower.transpose().triangularView<Eigen::Upper>().solveInPlace(coeff);
      observable_marginals_.push_back(std::move(marginal));
      regression_.push_back(std::move(coeff));
      hidden_means_.push_back(mu[kHiddenIndex]);
      log_weights_.push_back(std::log(gmm_.weights[k]));
    }
  }

  const GmmModel& gmm() const noexcept { return gmm_; }
  const TransitionMatrix& transitions() const noexcept { return transitions_; }
  std::size_t modes() const noexcept { return gmm_.components(); }

  /// log N(zeta; mu_k^zeta, Sigma_k^zetazeta) for every mode.
  Eigen::VectorXd observable_log_densities(const ObservablePoint& zeta) const {
    const Eigen::VectorXd z = to_vector(zeta);
    Eigen::VectorXd out(static_cast<Eigen::Index>(modes()));
    for (std::size_t k = 0; k < modes(); ++k) out[static_cast<Eigen::Index>(k)] = observable_marginals_[k].log_pdf(z);
    return out;
  }

  /// Conditional mean of psidot under mode k.
  double conditional_yaw_rate(std::size_t k, const ObservablePoint& zeta) const {
    const Eigen::VectorXd diff = to_vector(zeta) - observable_marginals_[k].mean();
    return hidden_means_[k] + regression_[k].dot(diff);
  }

  const std::vector<double>& log_weights() const noexcept { return log_weights_; }

  // Interface consumed by the predictor.
  ForwardState init(const ObservablePoint& zeta) const;
  ForwardState advance(const ForwardState& state, const ObservablePoint& zeta) const;
  double yaw_rate(const ForwardState& state, const ObservablePoint& zeta) const;

 private:
  GmmModel gmm_;
  TransitionMatrix transitions_;
  std::vector<GaussianDensity> observable_marginals_;
  std::vector<Eigen::VectorXd> regression_;
  std::vector<double> hidden_means_;
  std::vector<double> log_weights_;
};

namespace detail {

inline ForwardState normalize_log_weights(const Eigen::VectorXd& log_w, std::size_t t) {
  const double lse = log_sum_exp(log_w);
  if (!std::isfinite(lse)) throw NumericalUnderflow("all forward weights vanished at step " + std::to_string(t));
  ForwardState out;
  out.beta = (log_w.array() - lse).unaryExpr([](double x) { return std::exp(x); }).matrix();
  out.beta /= out.beta.sum();
  out.t = t;
  return out;
}

}  // namespace detail

/// beta_k,1 proportional to w_k N(zeta_1; mu_k^zeta, Sigma_k^zetazeta).
inline ForwardState init_forward(const ObservablePoint& zeta, const PdmModel& model) {
  Eigen::VectorXd log_w = model.observable_log_densities(zeta);
  for (std::size_t k = 0; k < model.modes(); ++k) log_w[static_cast<Eigen::Index>(k)] += model.log_weights()[k];
  return detail::normalize_log_weights(log_w, 1);
}

/// One forward recursion step, evaluated in the log domain:
/// beta_k,t proportional to (sum_j beta_j,t-1 alpha_jk) N(zeta_t; mu_k^zeta, Sigma_k^zetazeta).
inline ForwardState forward_step(const ForwardState& state, const ObservablePoint& zeta, const PdmModel& model) {
  if (state.beta.size() != static_cast<Eigen::Index>(model.modes())) {
    throw InvalidConfig("forward state size does not match the model");
  }
  const Eigen::VectorXd prior = model.transitions().entries.transpose() * state.beta;
  Eigen::VectorXd log_w = model.observable_log_densities(zeta);
  for (Eigen::Index k = 0; k < log_w.size(); ++k) {
    log_w[k] = prior[k] > 0.0 ? log_w[k] + std::log(prior[k]) : -std::numeric_limits<double>::infinity();
  }
  return detail::normalize_log_weights(log_w, state.t + 1);
}

/// The same recursion in the linear domain. Underflows on long or unlikely
/// sequences; kept as a reference implementation.
inline ForwardState forward_step_linear(const ForwardState& state, const ObservablePoint& zeta,
                                        const PdmModel& model) {
  const Eigen::VectorXd prior = model.transitions().entries.transpose() * state.beta;
  const Eigen::VectorXd density = model.observable_log_densities(zeta).unaryExpr([](double x) { return std::exp(x); });
  const Eigen::VectorXd w = prior.cwiseProduct(density);
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalUnderflow("linear forward weights underflowed at step " + std::to_string(state.t + 1));
  }
  return {w / total, state.t + 1};
}

/// E[psidot | zeta_1..zeta_t] = sum_k beta_k [mu_k^psidot + Sigma_k^psidot,zeta (Sigma_k^zetazeta)^-1 (zeta - mu_k^zeta)].
inline double infer_yaw_rate(const ForwardState& state, const ObservablePoint& zeta, const PdmModel& model) {
  double out = 0.0;
  for (std::size_t k = 0; k < model.modes(); ++k) {
    const double b = state.beta[static_cast<Eigen::Index>(k)];
    if (b == 0.0) continue;
    out += b * model.conditional_yaw_rate(k, zeta);
  }
  return out;
}

inline ForwardState PdmModel::init(const ObservablePoint& zeta) const { return init_forward(zeta, *this); }

inline ForwardState PdmModel::advance(const ForwardState& state, const ObservablePoint& zeta) const {
  return forward_step(state, zeta, *this);
}

inline double PdmModel::yaw_rate(const ForwardState& state, const ObservablePoint& zeta) const {
  return infer_yaw_rate(state, zeta, *this);
}

/// Builds the HMM layer on a trained GMM: every training point gets its
/// mode, and transitions are counted inside each sequence.
inline PdmModel build_pdm(GmmModel gmm, const std::vector<std::vector<DrivingPoint>>& sequences) {
  std::vector<std::vector<std::size_t>> modes;
  modes.reserve(sequences.size());
  for (const auto& seq : sequences) modes.push_back(assign_modes(to_matrix(seq), gmm));
  TransitionMatrix transitions = estimate_transitions(modes, gmm.components());
  return PdmModel(std::move(gmm), std::move(transitions));
}

// ---------------------------------------------------------------------------
// serialization

inline void to_json(nlohmann::json& j, const TransitionMatrix& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < t.entries.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(t.entries.cols()));
    for (Eigen::Index c = 0; c < t.entries.cols(); ++c) row[static_cast<std::size_t>(c)] = t.entries(i, c);
    rows.push_back(std::move(row));
  }
  j = nlohmann::json{{"entries", std::move(rows)}, {"counts", t.counts}, {"state_totals", t.state_totals}};
}

inline void from_json(const nlohmann::json& j, TransitionMatrix& t) {
  const auto rows = j.at("entries").get<std::vector<std::vector<double>>>();
  const auto k = static_cast<Eigen::Index>(rows.size());
  t.entries.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != k) {
      throw InvalidConfig("transition matrix JSON is not square");
    }
    for (Eigen::Index c = 0; c < k; ++c) t.entries(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  j.at("counts").get_to(t.counts);
  j.at("state_totals").get_to(t.state_totals);
}

inline nlohmann::json pdm_to_json(const PdmModel& model, const FitReport* report = nullptr) {
  nlohmann::json j = model.gmm();
  if (report) j["fit_report"] = *report;
  j["transitions"] = model.transitions();
  j["partition"] = {{"observable", std::vector<Eigen::Index>(PdmModel::kObservableIndices.begin(),
                                                             PdmModel::kObservableIndices.end())},
                    {"hidden", std::vector<Eigen::Index>{PdmModel::kHiddenIndex}}};
  return j;
}

inline PdmModel pdm_from_json(const nlohmann::json& j) try {
  const auto observable = j.at("partition").at("observable").get<std::vector<Eigen::Index>>();
  const auto hidden = j.at("partition").at("hidden").get<std::vector<Eigen::Index>>();
  if (observable != std::vector<Eigen::Index>(PdmModel::kObservableIndices.begin(), PdmModel::kObservableIndices.end()) ||
      hidden != std::vector<Eigen::Index>{PdmModel::kHiddenIndex}) {
    throw InvalidConfig("unsupported PDM partition");
  }
  return PdmModel(j.get<GmmModel>(), j.at("transitions").get<TransitionMatrix>());
} catch (const nlohmann::json::exception& e) {
  throw InvalidConfig(std::string("malformed PDM model JSON: ") + e.what());
}

}  // namespace ldw
