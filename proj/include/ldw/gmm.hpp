#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ldw/domain.hpp"
#include "ldw/errors.hpp"

namespace ldw {

// ---------------------------------------------------------------------------
// Gaussian building blocks

/// Relative jitter added to a covariance whose Cholesky factorisation fails,
/// scaled by the mean diagonal variance.
inline constexpr double kCovarianceJitter = 1e-6;

/// Covariance after the jitter policy: unchanged if positive definite,
/// otherwise Sigma + lambda*I with lambda = kCovarianceJitter * mean(diag).
/// Throws SingularCovariance if even the jittered matrix is not PD.
inline Eigen::MatrixXd regularize_covariance(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw SingularCovariance("covariance must be a non-empty square matrix");
  }
  if (!sigma.allFinite()) throw SingularCovariance("covariance has non-finite entries");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
    return sigma;
  }
  const double lambda = kCovarianceJitter * sigma.diagonal().mean();
  if (!(lambda > 0.0)) throw SingularCovariance("covariance is singular and has no variance to scale jitter");
  Eigen::MatrixXd jittered = sigma;
  jittered.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> retry(jittered);
  if (retry.info() != Eigen::Success) {
    throw SingularCovariance("covariance not positive definite after regularization");
  }
  return jittered;
}

/// Multivariate normal with its Cholesky factor cached, so repeated
/// evaluations cost one triangular solve.
class GaussianDensity {
 public:
  GaussianDensity() = default;

  GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance)
      : mean_(std::move(mean)) {
    if (covariance.rows() != mean_.size()) {
      throw SingularCovariance("mean/covariance dimension mismatch");
    }
    const Eigen::MatrixXd sigma = regularize_covariance(covariance);
    lower_ = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
    const double d = static_cast<double>(mean_.size());
    const double half_log_det = lower_.diagonal().array().log().sum();
    log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) - half_log_det;
  }

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& cholesky_lower() const noexcept { return lower_; }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd z = x - mean_;
    lower_.triangularView<Eigen::Lower>().solveInPlace(z);
    return log_norm_ - 0.5 * z.squaredNorm();
  }

  /// Log density of every column of `x`.
  /// Log density of every column of `x`. Whitens through L^-1 as one
  /// matrix product, which is much faster than a column-wise solve.
  Eigen::VectorXd log_pdf_columns(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd whiten =
        lower_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim(), dim()));
    const Eigen::VectorXd shift = whiten * mean_;
    Eigen::MatrixXd z = whiten * x;
    z.colwise() -= shift;
    return (log_norm_ - 0.5 * z.colwise().squaredNorm().transpose().array()).matrix();
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lower_;
  double log_norm_ = 0.0;
};

inline double mgd_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                          const Eigen::MatrixXd& sigma) {
  if (x.size() != mu.size()) throw SingularCovariance("point/mean dimension mismatch");
  return GaussianDensity(mu, sigma).log_pdf(x);
}

/// (2 pi)^(-d/2) |Sigma|^(-1/2) exp(-0.5 (x-mu)^T Sigma^-1 (x-mu)).
inline double mgd_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                      const Eigen::MatrixXd& sigma) {
  return std::exp(mgd_log_pdf(x, mu, sigma));
}

/// log(sum(exp(v))) without overflow; -inf for an all -inf input.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).unaryExpr([](double x) { return std::exp(x); }).sum());
}

// ---------------------------------------------------------------------------
// model

struct GmmModel {
  std::vector<std::string> dim_labels;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  std::size_t components() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept {
    return means.empty() ? 0 : static_cast<std::size_t>(means.front().size());
  }

  /// Checks the simplex, symmetry and positive-definiteness invariants.
  void validate() const {
    const std::size_t k = components();
    if (k == 0) throw InvalidConfig("GMM has no components");
    if (means.size() != k || covariances.size() != k) {
      throw InvalidConfig("GMM parameter arrays disagree on component count");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0 && w <= 1.0)) throw InvalidConfig("GMM weight outside (0, 1]");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidConfig("GMM weights do not sum to 1");
    const auto d = static_cast<Eigen::Index>(dim());
    for (std::size_t i = 0; i < k; ++i) {
      if (means[i].size() != d || covariances[i].rows() != d || covariances[i].cols() != d) {
        throw InvalidConfig("GMM component dimension mismatch");
      }
      if ((covariances[i] - covariances[i].transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw InvalidConfig("GMM covariance not symmetric");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(covariances[i]);
      if (llt.info() != Eigen::Success) throw SingularCovariance("GMM covariance not positive definite");
    }
  }
};

inline std::vector<GaussianDensity> component_densities(const GmmModel& model) {
  std::vector<GaussianDensity> out;
  out.reserve(model.components());
  for (std::size_t k = 0; k < model.components(); ++k) {
    out.emplace_back(model.means[k], model.covariances[k]);
  }
  return out;
}

inline double gmm_log_pdf(const Eigen::VectorXd& x, const GmmModel& model) {
  Eigen::VectorXd terms(static_cast<Eigen::Index>(model.components()));
  for (std::size_t k = 0; k < model.components(); ++k) {
    terms[static_cast<Eigen::Index>(k)] =
        std::log(model.weights[k]) + mgd_log_pdf(x, model.means[k], model.covariances[k]);
  }
  return log_sum_exp(terms);
}

inline double gmm_pdf(const Eigen::VectorXd& x, const GmmModel& model) {
  return std::exp(gmm_log_pdf(x, model));
}

namespace detail {

/// n x K matrix of log(w_k) + log N(x_t; mu_k, Sigma_k).
inline Eigen::MatrixXd weighted_log_densities(const Eigen::MatrixXd& data, const GmmModel& model) {
  const auto k = static_cast<Eigen::Index>(model.components());
  Eigen::MatrixXd out(data.cols(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const GaussianDensity density(model.means[static_cast<std::size_t>(j)],
                                  model.covariances[static_cast<std::size_t>(j)]);
    out.col(j) = density.log_pdf_columns(data).array() +
                 std::log(model.weights[static_cast<std::size_t>(j)]);
  }
  return out;
}

/// Row-wise log-sum-exp; accumulation order is fixed per row.
inline Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.rows());
  const Eigen::VectorXd peak = m.rowwise().maxCoeff();
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    if (!std::isfinite(peak[t])) {
      out[t] = peak[t];
      continue;
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) s += std::exp(m(t, j) - peak[t]);
    out[t] = peak[t] + std::log(s);
  }
  return out;
}

inline double sequential_sum(const Eigen::VectorXd& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i];
  return s;
}

}  // namespace detail

/// Columns of `data` are observations. Sum of log p(x_t; theta).
inline double log_likelihood(const Eigen::MatrixXd& data, const GmmModel& model) {
  if (data.cols() == 0) throw EmptyData("log_likelihood of an empty dataset");
  return detail::sequential_sum(detail::row_log_sum_exp(detail::weighted_log_densities(data, model)));
}

// ---------------------------------------------------------------------------
// EM

struct FitReport {
  std::size_t iterations = 0;
  std::vector<double> loglik_trace;  // L(theta^0), L(theta^1), ...
  bool converged = false;
  double epsilon = 1e-10;
  // Iterations (indices into loglik_trace) that follow a degenerate-component
  // reinitialisation; monotonicity is not guaranteed across those steps.
  std::vector<std::size_t> reinitialized_at;
};

enum class InitKind { KMeansPlusPlus, Given };

struct InitStrategy {
  InitKind kind = InitKind::KMeansPlusPlus;
  std::size_t restarts = 5;
  std::optional<GmmModel> initial;  // used when kind == Given

  static InitStrategy kmeanspp(std::size_t restarts = 5) { return {InitKind::KMeansPlusPlus, restarts, {}}; }
  static InitStrategy given(GmmModel model) { return {InitKind::Given, 1, std::move(model)}; }
};

struct EmOptions {
  std::size_t components = 10;
  InitStrategy init{};
  double epsilon = 1e-10;
  std::size_t max_iter = 500;
  std::uint64_t seed = 0;
};

struct GmmFit {
  GmmModel model;
  FitReport report;
};

namespace detail {

inline std::vector<std::string> default_labels(std::size_t d) {
  if (d == kObservationDim) return {kDimLabels.begin(), kDimLabels.end()};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < d; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& data) {
  const Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(data.cols());
  return 0.5 * (cov + cov.transpose());
}

/// k-means++ seeding on standardised data followed by one hard assignment
/// to build weights, means and covariances in raw units.
inline GmmModel kmeanspp_init(const Eigen::MatrixXd& data, std::size_t k, std::mt19937_64& rng) {
  const Eigen::Index n = data.cols();
  const Eigen::Index d = data.rows();
  const Eigen::VectorXd mean = data.rowwise().mean();
  Eigen::VectorXd scale = ((data.colwise() - mean).array().square().rowwise().sum() /
                           static_cast<double>(n)).sqrt().matrix();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(scale[i] > 0.0)) scale[i] = 1.0;
  }
  const Eigen::MatrixXd z = (data.colwise() - mean).array().colwise() / scale.array();

  std::vector<Eigen::Index> centers;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.push_back(pick(rng));
  Eigen::VectorXd dist2 = (z.colwise() - z.col(centers[0])).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k) {
    const double total = sequential_sum(dist2);
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index t = 0; t < n; ++t) {
        acc += dist2[t];
        if (acc >= target && dist2[t] > 0.0) {
          chosen = t;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.push_back(chosen);
    dist2 = dist2.cwiseMin((z.colwise() - z.col(chosen)).colwise().squaredNorm().transpose());
  }

  std::vector<std::vector<Eigen::Index>> members(k);
  for (Eigen::Index t = 0; t < n; ++t) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dd = (z.col(t) - z.col(centers[c])).squaredNorm();
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    members[best].push_back(t);
  }

  const Eigen::MatrixXd global_cov = sample_covariance(data);
  GmmModel model;
  model.dim_labels = default_labels(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < k; ++c) {
    const auto& idx = members[c];
    if (idx.size() <= static_cast<std::size_t>(d)) {
      model.weights.push_back(std::max<double>(static_cast<double>(idx.size()), 1.0));
      model.means.push_back(data.col(centers[c]));
      model.covariances.push_back(regularize_covariance(global_cov));
      continue;
    }
    Eigen::MatrixXd block(d, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) block.col(static_cast<Eigen::Index>(j)) = data.col(idx[j]);
    model.weights.push_back(static_cast<double>(idx.size()));
    model.means.push_back(block.rowwise().mean());
    model.covariances.push_back(regularize_covariance(sample_covariance(block)));
  }
  const double total = std::accumulate(model.weights.begin(), model.weights.end(), 0.0);
  for (double& w : model.weights) w /= total;
  return model;
}

struct EmRun {
  GmmModel model;
  FitReport report;
};

inline EmRun run_em(const Eigen::MatrixXd& data, GmmModel model, double epsilon, std::size_t max_iter) {
  const Eigen::Index n = data.cols();
  const auto k = static_cast<Eigen::Index>(model.components());
  const double min_mass = 1.0;  // less than one point's worth of responsibility
  FitReport report;
  report.epsilon = epsilon;

  for (std::size_t iter = 0;; ++iter) {
    // E-step: responsibilities and L(theta^l) in one pass.
    const Eigen::MatrixXd log_joint = weighted_log_densities(data, model);
    const Eigen::VectorXd log_px = row_log_sum_exp(log_joint);
    const double loglik = sequential_sum(log_px);
    report.loglik_trace.push_back(loglik);
    if (report.loglik_trace.size() >= 2) {
      const double prev = report.loglik_trace[report.loglik_trace.size() - 2];
      if (loglik - prev < epsilon) {
        report.converged = true;
        break;
      }
    }
    if (iter >= max_iter) break;

    const Eigen::MatrixXd resp = (log_joint.colwise() - log_px).array().exp().matrix();

    // M-step.
    bool reinitialized = false;
    Eigen::VectorXd mass(k);
    for (Eigen::Index j = 0; j < k; ++j) mass[j] = sequential_sum(resp.col(j));
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto c = static_cast<std::size_t>(j);
      if (!(mass[j] >= min_mass)) {
        // Reseed at the worst-explained point with the pooled covariance.
        Eigen::Index worst = 0;
        log_px.minCoeff(&worst);
        model.means[c] = data.col(worst);
        model.covariances[c] = regularize_covariance(sample_covariance(data));
        model.weights[c] = 1.0 / static_cast<double>(n);
        reinitialized = true;
        continue;
      }
      const Eigen::VectorXd r = resp.col(j);
      const Eigen::VectorXd mu = data * r / mass[j];
      const Eigen::MatrixXd centered = data.colwise() - mu;
      Eigen::MatrixXd cov = (centered.array().rowwise() * r.transpose().array()).matrix() *
                            centered.transpose() / mass[j];
      cov = 0.5 * (cov + cov.transpose());
      model.weights[c] = mass[j] / static_cast<double>(n);
      model.means[c] = mu;
      model.covariances[c] = regularize_covariance(cov);
    }
    const double total = std::accumulate(model.weights.begin(), model.weights.end(), 0.0);
    for (double& w : model.weights) w /= total;
    report.iterations = iter + 1;
    if (reinitialized) report.reinitialized_at.push_back(report.iterations);
  }
  return {std::move(model), std::move(report)};
}

}  // namespace detail

/// Maximum-likelihood fit of a K-component full-covariance mixture by EM.
///
/// Stops at the first iteration whose log-likelihood gain is below
/// `epsilon`, or after `max_iter` M-steps. With k-means++ init, the best of
/// `init.restarts` runs (by final log-likelihood) is kept; each restart draws
/// from one RNG stream seeded with `seed`, so results are reproducible.
inline GmmFit em_fit(const Eigen::MatrixXd& data, const EmOptions& options) {
  const std::size_t k = options.components;
  const auto d = static_cast<std::size_t>(data.rows());
  if (data.cols() == 0) throw EmptyData("em_fit on empty data");
  if (k == 0) throw InvalidConfig("component count must be >= 1");
  if (!(options.epsilon > 0.0)) throw InvalidConfig("epsilon must be > 0");
  if (static_cast<std::size_t>(data.cols()) < k * (d + 1)) {
    throw InsufficientData("em_fit needs at least K*(d+1) = " + std::to_string(k * (d + 1)) +
                           " points, got " + std::to_string(data.cols()));
  }
  if (!data.allFinite()) throw InvalidConfig("em_fit data contains non-finite values");

  if (options.init.kind == InitKind::Given) {
    if (!options.init.initial) throw InvalidConfig("given init strategy without a model");
    GmmModel init = *options.init.initial;
    if (init.components() != k || init.dim() != d) throw InvalidConfig("initial model shape mismatch");
    auto run = detail::run_em(data, std::move(init), options.epsilon, options.max_iter);
    return {std::move(run.model), std::move(run.report)};
  }

  std::mt19937_64 rng(options.seed);
  std::optional<detail::EmRun> best;
  const std::size_t restarts = std::max<std::size_t>(options.init.restarts, 1);
  for (std::size_t r = 0; r < restarts; ++r) {
    auto run = detail::run_em(data, detail::kmeanspp_init(data, k, rng), options.epsilon, options.max_iter);
    if (!best || run.report.loglik_trace.back() > best->report.loglik_trace.back()) best = std::move(run);
  }
  return {std::move(best->model), std::move(best->report)};
}

// ---------------------------------------------------------------------------
// model selection

/// Free parameters of a full-covariance mixture: K-1 + K*d + K*d(d+1)/2.
constexpr std::size_t free_parameter_count(std::size_t k, std::size_t d) {
  return (k - 1) + k * d + k * d * (d + 1) / 2;
}

/// -2 L + p ln(n); lower is better.
inline double bic_score(const Eigen::MatrixXd& data, const GmmModel& model) {
  if (data.cols() == 0) throw EmptyData("bic_score on empty data");
  const double p = static_cast<double>(free_parameter_count(model.components(), model.dim()));
  return -2.0 * log_likelihood(data, model) + p * std::log(static_cast<double>(data.cols()));
}

struct BicPoint {
  std::size_t k = 0;
  double bic = 0.0;
};

struct ComponentSelection {
  std::size_t k = 0;
  std::vector<BicPoint> curve;
  GmmFit fit;  // best fit at the selected K
};

struct SelectionOptions {
  std::size_t k_min = 1;
  std::size_t k_max = 12;
  std::size_t runs_per_k = 1;
  double elbow_fraction = 0.01;
  std::uint64_t seed = 0;
  double epsilon = 1e-10;
  std::size_t max_iter = 500;
  std::size_t restarts = 5;
};

/// Sweeps K over [k_min, k_max] and returns the elbow: the smallest K for
/// which moving to K+1 improves BIC by less than `elbow_fraction` of |BIC(K)|.
/// Falls back to the BIC minimum if the curve never flattens.
inline ComponentSelection select_components(const Eigen::MatrixXd& data, const SelectionOptions& options) {
  if (options.k_min < 1 || options.k_max < options.k_min) throw InvalidConfig("empty K range");
  std::vector<GmmFit> fits;
  ComponentSelection out;
  for (std::size_t k = options.k_min; k <= options.k_max; ++k) {
    std::optional<GmmFit> best;
    double best_bic = std::numeric_limits<double>::infinity();
    for (std::size_t run = 0; run < std::max<std::size_t>(options.runs_per_k, 1); ++run) {
      EmOptions em;
      em.components = k;
      em.init = InitStrategy::kmeanspp(options.restarts);
      em.epsilon = options.epsilon;
      em.max_iter = options.max_iter;
      em.seed = options.seed + 1000003ULL * k + run;
      GmmFit fit = em_fit(data, em);
      const double bic = bic_score(data, fit.model);
      if (bic < best_bic) {
        best_bic = bic;
        best = std::move(fit);
      }
    }
    out.curve.push_back({k, best_bic});
    fits.push_back(std::move(*best));
  }

  std::size_t chosen = out.curve.size();
  for (std::size_t i = 0; i + 1 < out.curve.size(); ++i) {
    const double gain = (out.curve[i].bic - out.curve[i + 1].bic) / std::abs(out.curve[i].bic);
    if (gain < options.elbow_fraction) {
      chosen = i;
      break;
    }
  }
  if (chosen == out.curve.size()) {
    chosen = static_cast<std::size_t>(std::min_element(out.curve.begin(), out.curve.end(),
                                                       [](const BicPoint& a, const BicPoint& b) {
                                                         return a.bic < b.bic;
                                                       }) -
                                      out.curve.begin());
  }
  out.k = out.curve[chosen].k;
  out.fit = std::move(fits[chosen]);
  return out;
}

// ---------------------------------------------------------------------------
// serialization

inline void to_json(nlohmann::json& j, const FitReport& r) {
  j = nlohmann::json{{"iterations", r.iterations},
                     {"loglik_trace", r.loglik_trace},
                     {"converged", r.converged},
                     {"epsilon", r.epsilon},
                     {"reinitialized_at", r.reinitialized_at}};
}

inline void from_json(const nlohmann::json& j, FitReport& r) {
  j.at("iterations").get_to(r.iterations);
  j.at("loglik_trace").get_to(r.loglik_trace);
  j.at("converged").get_to(r.converged);
  j.at("epsilon").get_to(r.epsilon);
  r.reinitialized_at = j.value("reinitialized_at", std::vector<std::size_t>{});
}

inline void to_json(nlohmann::json& j, const GmmModel& m) {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (std::size_t k = 0; k < m.components(); ++k) {
    means.push_back(std::vector<double>(m.means[k].data(), m.means[k].data() + m.means[k].size()));
    std::vector<double> flat;
    for (Eigen::Index r = 0; r < m.covariances[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.covariances[k].cols(); ++c) flat.push_back(m.covariances[k](r, c));
    }
    covs.push_back(std::move(flat));
  }
  j = nlohmann::json{{"dim_labels", m.dim_labels},
                     {"K", m.components()},
                     {"weights", m.weights},
                     {"means", std::move(means)},
                     {"covariances", std::move(covs)}};
}

inline void from_json(const nlohmann::json& j, GmmModel& m) {
  j.at("dim_labels").get_to(m.dim_labels);
  j.at("weights").get_to(m.weights);
  const auto k = j.at("K").get<std::size_t>();
  if (m.weights.size() != k) throw InvalidConfig("GMM JSON: K disagrees with weights");
  m.means.clear();
  m.covariances.clear();
  for (const auto& mu : j.at("means")) {
    const auto v = mu.get<std::vector<double>>();
    m.means.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  for (const auto& cov : j.at("covariances")) {
    const auto v = cov.get<std::vector<double>>();
    const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
    if (d * d != static_cast<Eigen::Index>(v.size())) throw InvalidConfig("GMM JSON: covariance is not square");
    m.covariances.push_back(
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), d, d));
  }
  if (m.means.size() != k || m.covariances.size() != k) throw InvalidConfig("GMM JSON: component count mismatch");
}

}  // namespace ldw
