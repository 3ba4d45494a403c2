#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "ldw/hmm.hpp"
#include "test_util.hpp"

using namespace ldw;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double direct_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const Eigen::VectorXd diff = x - mu;
  const double d = static_cast<double>(x.size());
  return std::exp(-0.5 * diff.dot(sigma.inverse() * diff)) / std::sqrt(std::pow(2.0 * std::numbers::pi, d) *
                                                                         sigma.determinant());
}

GmmModel random_gmm5(std::size_t k, std::mt19937_64& rng, double spread = 1.0) {
  GmmModel m;
  m.dim_labels = detail::default_labels(kObservationDim);
  for (std::size_t i = 0; i < k; ++i) {
    m.weights.push_back(1.0 / static_cast<double>(k));
    m.means.push_back(test::random_vector(kObservationDim, rng, spread));
    m.covariances.push_back(test::random_spd(kObservationDim, rng));
  }
  return m;
}

TransitionMatrix random_transitions(std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  std::vector<std::size_t> seq(500);
  for (auto& s : seq) s = pick(rng);
  return estimate_transitions(seq, k);
}

ObservablePoint as_zeta(const Eigen::VectorXd& x) { return {x[0], x[1], x[2], x[3]}; }

// Analytic E[x_4 | x_0..3] from the precision matrix of the joint Gaussian.
double conditional_mean_oracle(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& z) {
  const Eigen::MatrixXd precision = sigma.inverse();
  const double lhh = precision(4, 4);
  const Eigen::RowVectorXd lhz = precision.block(4, 0, 1, 4);
  return mu[4] - (lhz * (z - mu.head(4)))(0) / lhh;
}

}  // namespace

TEST_CASE("assign_mode uses unweighted density with lowest-index ties") {
  GmmModel m;
  m.dim_labels = {"a", "b"};
  m.weights = {0.01, 0.99};
  m.means = {Eigen::Vector2d(0, 0), Eigen::Vector2d(10, 0)};
  m.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  CHECK(assign_mode(Eigen::Vector2d(0, 0), m) == 0);
  CHECK(assign_mode(Eigen::Vector2d(10, 0), m) == 1);
  CHECK(assign_mode(Eigen::Vector2d(5, 0), m) == 0);  // equidistant tie

  // Weighting would flip this point; the unweighted rule must not.
  CHECK(assign_mode(Eigen::Vector2d(4.9, 0), m) == 0);
}

TEST_CASE("assign_modes agrees with a brute-force density scan") {
  std::mt19937_64 rng(17);
  GmmModel m;
  m.dim_labels = {"a", "b", "c"};
  for (int k = 0; k < 4; ++k) {
    m.weights.push_back(0.25);
    m.means.push_back(test::random_vector(3, rng, 2.0));
    m.covariances.push_back(test::random_spd(3, rng));
  }
  Eigen::MatrixXd data(3, 1000);
  for (Eigen::Index c = 0; c < data.cols(); ++c) data.col(c) = test::random_vector(3, rng, 2.5);
  const auto modes = assign_modes(data, m);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    std::size_t best = 0;
    double best_p = -1.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double p = direct_pdf(data.col(c), m.means[k], m.covariances[k]);
      if (p > best_p) {
        best_p = p;
        best = k;
      }
    }
    CHECK(modes[static_cast<std::size_t>(c)] == best);
    CHECK(assign_mode(data.col(c), m) == best);
  }
}

TEST_CASE("estimate_transitions examples") {
  const std::vector<std::size_t> absorbing{0, 0, 0, 0};
  const auto a = estimate_transitions(absorbing, 2);
  CHECK(a.entries(0, 0) == 1.0);
  CHECK(a.entries(0, 1) == 0.0);
  CHECK(a.entries(1, 0) == 0.5);
  CHECK(a.entries(1, 1) == 0.5);
  CHECK(a.state_totals == std::vector<std::uint64_t>{3, 0});

  const std::vector<std::size_t> alternating{0, 1, 0, 1, 0};
  const auto b = estimate_transitions(alternating, 2);
  CHECK(b.entries(0, 1) == 1.0);
  CHECK(b.entries(1, 0) == 1.0);
  CHECK(b.entries(0, 0) == 0.0);

  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(estimate_transitions(one, 2), SequenceTooShort);
  const std::vector<std::size_t> out_of_range{0, 3};
  CHECK_THROWS_AS(estimate_transitions(out_of_range, 2), InvalidConfig);
}

TEST_CASE("estimate_transitions matches a pair-counting oracle") {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<std::size_t> pick(0, 4);
  std::vector<std::size_t> seq(10000);
  for (auto& s : seq) s = pick(rng);
  const auto t = estimate_transitions(seq, 5);
  std::uint64_t f[5][5] = {};
  std::uint64_t n[5] = {};
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    ++f[seq[i]][seq[i + 1]];
    ++n[seq[i]];
  }
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(t.state_totals[i] == n[i]);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(t.counts[i][j] == f[i][j]);
      CHECK(t.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
            static_cast<double>(f[i][j]) / static_cast<double>(n[i]));
    }
    CHECK_THAT(t.entries.row(static_cast<Eigen::Index>(i)).sum(), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("pooled transitions never count pairs across sequences") {
  const std::vector<std::vector<std::size_t>> seqs{{0, 0}, {1, 1}};
  const auto t = estimate_transitions(seqs, 2);
  CHECK(t.counts[0][1] == 0);
  CHECK(t.counts[0][0] == 1);
  CHECK(t.counts[1][1] == 1);
  CHECK_THROWS_AS(estimate_transitions(std::vector<std::vector<std::size_t>>{{0}, {1}}, 2), SequenceTooShort);
}

TEST_CASE("init_forward and forward_step match hand-coded recursions") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const GmmModel g = random_gmm5(4, rng);
    const PdmModel model(g, random_transitions(4, rng));
    const ObservablePoint z1 = as_zeta(test::random_vector(5, rng));
    const ObservablePoint z2 = as_zeta(test::random_vector(5, rng));

    Eigen::VectorXd w(4);
    for (std::size_t k = 0; k < 4; ++k) {
      w[static_cast<Eigen::Index>(k)] =
          g.weights[k] * direct_pdf(to_vector(z1), g.means[k].head(4), g.covariances[k].topLeftCorner(4, 4));
    }
    const Eigen::VectorXd beta1 = w / w.sum();
    const auto s1 = init_forward(z1, model);
    CHECK((s1.beta - beta1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s1.t == 1);

    Eigen::VectorXd w2(4);
    for (Eigen::Index k = 0; k < 4; ++k) {
      double prior = 0.0;
      for (Eigen::Index j = 0; j < 4; ++j) prior += beta1[j] * model.transitions().entries(j, k);
      const auto kk = static_cast<std::size_t>(k);
      w2[k] = prior * direct_pdf(to_vector(z2), g.means[kk].head(4), g.covariances[kk].topLeftCorner(4, 4));
    }
    const auto s2 = forward_step(s1, z2, model);
    CHECK((s2.beta - w2 / w2.sum()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s2.t == 2);
  }
}

TEST_CASE("forward recursion special cases") {
  std::mt19937_64 rng(29);
  SECTION("K=1 keeps beta at one") {
    const PdmModel model(random_gmm5(1, rng), estimate_transitions(std::vector<std::size_t>{0, 0}, 1));
    auto s = init_forward(as_zeta(test::random_vector(5, rng)), model);
    for (int i = 0; i < 50; ++i) {
      s = forward_step(s, as_zeta(test::random_vector(5, rng, 3.0)), model);
      CHECK(s.beta[0] == 1.0);
    }
  }
  SECTION("identity transitions and a point near mode 1 only") {
    GmmModel g = random_gmm5(3, rng);
    g.means[0].setConstant(-20.0);
    g.means[1].setZero();
    g.means[2].setConstant(20.0);
    TransitionMatrix t = estimate_transitions(std::vector<std::size_t>{0, 0, 1, 1, 2, 2}, 3);
    t.entries = Eigen::MatrixXd::Identity(3, 3);
    const PdmModel model(g, t);
    ForwardState s{Eigen::Vector3d::Constant(1.0 / 3.0), 1};
    s = forward_step(s, ObservablePoint{0, 0, 0, 0}, model);
    CHECK(s.beta[1] > 1.0 - 1e-9);
  }
  SECTION("uniform transitions and identical marginals keep beta uniform") {
    GmmModel g = random_gmm5(3, rng);
    for (std::size_t k = 1; k < 3; ++k) {
      g.means[k].head(4) = g.means[0].head(4);
      g.covariances[k].topLeftCorner(4, 4) = g.covariances[0].topLeftCorner(4, 4);
    }
    TransitionMatrix t = estimate_transitions(std::vector<std::size_t>{0, 1}, 3);
    t.entries.setConstant(1.0 / 3.0);
    const PdmModel model(g, t);
    auto s = init_forward(as_zeta(test::random_vector(5, rng)), model);
    for (int i = 0; i < 10; ++i) s = forward_step(s, as_zeta(test::random_vector(5, rng)), model);
    CHECK((s.beta.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
  }
  SECTION("init favours the component whose mean is observed") {
    GmmModel g = random_gmm5(2, rng);
    g.means[0].setConstant(-5.0);
    g.means[1].setConstant(5.0);
    g.covariances[1] = g.covariances[0];
    const PdmModel model(g, estimate_transitions(std::vector<std::size_t>{0, 1}, 2));
    const auto s = init_forward(as_zeta(g.means[0]), model);
    CHECK(s.beta[0] > s.beta[1]);
  }
}

TEST_CASE("log and linear forward steps agree and stay on the simplex") {
  std::mt19937_64 rng(31);
  const PdmModel model(random_gmm5(5, rng), random_transitions(5, rng));
  auto log_state = init_forward(as_zeta(test::random_vector(5, rng)), model);
  auto lin_state = log_state;
  for (int i = 0; i < 500; ++i) {
    const auto z = as_zeta(test::random_vector(5, rng));
    log_state = forward_step(log_state, z, model);
    lin_state = forward_step_linear(lin_state, z, model);
    CHECK(std::abs(log_state.beta.sum() - 1.0) <= 1e-12);
    CHECK(log_state.beta.minCoeff() >= 0.0);
    CHECK((log_state.beta - lin_state.beta).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("log-domain recursion survives points the linear form underflows on") {
  std::mt19937_64 rng(37);
  const PdmModel model(random_gmm5(3, rng), random_transitions(3, rng));
  const auto s = init_forward(ObservablePoint{0, 0, 0, 0}, model);
  const ObservablePoint far{1e4, -1e4, 1e4, -1e4};
  CHECK_THROWS_AS(forward_step_linear(s, far, model), NumericalUnderflow);
  const auto next = forward_step(s, far, model);
  CHECK(std::abs(next.beta.sum() - 1.0) <= 1e-12);
}

TEST_CASE("infer_yaw_rate with K=1 equals the Gaussian conditional mean") {
  std::mt19937_64 rng(41);
  const GmmModel g = random_gmm5(1, rng);
  const PdmModel model(g, estimate_transitions(std::vector<std::size_t>{0, 0}, 1));
  auto s = init_forward(as_zeta(test::random_vector(5, rng)), model);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd x = test::random_vector(5, rng, 2.0);
    const auto z = as_zeta(x);
    s = forward_step(s, z, model);
    CHECK_THAT(infer_yaw_rate(s, z, model), WithinAbs(conditional_mean_oracle(g.means[0], g.covariances[0], x.head(4)),
                                                      1e-10));
  }
  CHECK_THAT(infer_yaw_rate(s, as_zeta(g.means[0]), model), WithinAbs(g.means[0][4], 1e-12));
}

TEST_CASE("zero cross-covariance ignores zeta") {
  std::mt19937_64 rng(43);
  GmmModel g = random_gmm5(3, rng);
  for (auto& c : g.covariances) {
    c.block(0, 4, 4, 1).setZero();
    c.block(4, 0, 1, 4).setZero();
  }
  const PdmModel model(g, random_transitions(3, rng));
  const auto s = init_forward(as_zeta(test::random_vector(5, rng)), model);
  double expected = 0.0;
  for (std::size_t k = 0; k < 3; ++k) expected += s.beta[static_cast<Eigen::Index>(k)] * g.means[k][4];
  for (int i = 0; i < 20; ++i) {
    CHECK_THAT(infer_yaw_rate(s, as_zeta(test::random_vector(5, rng, 4.0)), model), WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("PdmModel validation and JSON round trip") {
  std::mt19937_64 rng(47);
  GmmModel g3;
  g3.dim_labels = {"a", "b", "c"};
  g3.weights = {1.0};
  g3.means = {Eigen::Vector3d::Zero()};
  g3.covariances = {Eigen::Matrix3d::Identity()};
  CHECK_THROWS_AS(PdmModel(g3, estimate_transitions(std::vector<std::size_t>{0, 0}, 1)), InvalidConfig);
  CHECK_THROWS_AS(PdmModel(random_gmm5(2, rng), estimate_transitions(std::vector<std::size_t>{0, 0}, 1)),
                  InvalidConfig);

  const PdmModel model(random_gmm5(3, rng), random_transitions(3, rng));
  FitReport report;
  report.iterations = 4;
  report.loglik_trace = {-5, -4, -3, -2.5, -2.5};
  const auto j = pdm_to_json(model, &report);
  CHECK(j.contains("fit_report"));
  CHECK(j.at("partition").at("hidden") == nlohmann::json::array({4}));
  const PdmModel back = pdm_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.transitions().entries == model.transitions().entries);
  CHECK(back.transitions().counts == model.transitions().counts);
  const auto z = as_zeta(test::random_vector(5, rng));
  CHECK(infer_yaw_rate(init_forward(z, back), z, back) == infer_yaw_rate(init_forward(z, model), z, model));

  auto broken = j;
  broken.erase("transitions");
  CHECK_THROWS_AS(pdm_from_json(broken), InvalidConfig);
}

TEST_CASE("build_pdm counts transitions inside each sequence") {
  std::mt19937_64 rng(53);
  GmmModel g = random_gmm5(2, rng);
  g.means[0] << 20, 0, 0, 1.5, 0;
  g.means[1] << 20, 0, 0, -1.5, 0;
  g.covariances[0] = Eigen::MatrixXd::Identity(5, 5) * 0.01;
  g.covariances[1] = g.covariances[0];
  std::vector<DrivingPoint> near{{0, 20, 0, 0, 1.5, 0}, {0.1, 20, 0, 0, 1.5, 0}};
  std::vector<DrivingPoint> far{{0, 20, 0, 0, -1.5, 0}, {0.1, 20, 0, 0, -1.5, 0}};
  const auto model = build_pdm(g, {near, far});
  CHECK(model.transitions().counts[0][0] == 1);
  CHECK(model.transitions().counts[1][1] == 1);
  CHECK(model.transitions().counts[0][1] == 0);
}
