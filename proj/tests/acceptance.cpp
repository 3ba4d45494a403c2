// Runs every acceptance criterion and prints one PASS/FAIL line each.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ldw/ldw.hpp"
#include "test_util.hpp"

#ifndef LDW_CLI_PATH
#error "LDW_CLI_PATH must point at the ldw executable"
#endif

using namespace ldw;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

// Means are drawn uniformly in a box and rejected until every pair is at least
// `separation` apart, so the mixtures are well separated.
GmmModel random_mixture(std::size_t k, std::size_t d, double spread, double separation, std::mt19937_64& rng) {
  GmmModel m;
  m.dim_labels = detail::default_labels(d);
  std::uniform_real_distribution<double> w(0.5, 1.5), box(-spread, spread);
  double total = 0.0;
  while (m.means.size() < k) {
    Eigen::VectorXd mu(d);
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = box(rng);
    bool apart = true;
    for (const auto& other : m.means) apart = apart && (other - mu).norm() >= separation;
    if (!apart) continue;
    m.means.push_back(mu);
    m.weights.push_back(w(rng));
    total += m.weights.back();
    m.covariances.push_back(test::random_spd(d, rng));
  }
  for (auto& x : m.weights) x /= total;
  return m;
}

Eigen::MatrixXd sample_mixture(const GmmModel& m, std::size_t n, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
  std::vector<std::size_t> counts(m.components(), 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[pick(rng)];
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.dim()), static_cast<Eigen::Index>(n));
  Eigen::Index col = 0;
  for (std::size_t c = 0; c < m.components(); ++c) {
    if (counts[c] == 0) continue;
    out.middleCols(col, static_cast<Eigen::Index>(counts[c])) =
        test::sample_gaussian(m.means[c], m.covariances[c], counts[c], rng);
    col += static_cast<Eigen::Index>(counts[c]);
  }
  return out;
}

// -- 1 ---------------------------------------------------------------------
Outcome em_monotonicity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  const std::size_t ks[] = {2, 5, 10};
  double worst = 0.0;
  std::size_t datasets = 0, max_iters = 0, reinit_steps = 0;
  for (int rep = 0; rep < 17; ++rep) {
    for (std::size_t k : ks) {
      const GmmModel truth = random_mixture(k, 5, 15.0, 10.0, rng);
      const Eigen::MatrixXd data = sample_mixture(truth, 2000, rng);
      EmOptions opt;
      opt.components = k;
      opt.init = InitStrategy::kmeanspp();
      opt.epsilon = 1e-10;
      opt.max_iter = 500;
      opt.seed = rng();
      const auto fit = em_fit(data, opt);
      ++datasets;
      if (!fit.report.converged) {
        return {false, "dataset " + std::to_string(datasets) + " (K=" + std::to_string(k) +
                           ") did not converge in 500 iterations"};
      }
      max_iters = std::max(max_iters, fit.report.iterations);
      const auto& tr = fit.report.loglik_trace;
      const auto& re = fit.report.reinitialized_at;
      reinit_steps += re.size();
      for (std::size_t i = 1; i < tr.size(); ++i) {
        if (std::find(re.begin(), re.end(), i) != re.end()) continue;
        worst = std::min(worst, tr[i] - tr[i - 1]);
      }
    }
  }
  const double elapsed = seconds_since(start);
  const bool ok = worst >= -1e-8 && elapsed < 120.0;
  return {ok, std::to_string(datasets) + " datasets, min dL=" + fmt(worst) + ", max iterations " +
                  std::to_string(max_iters) + ", reinit steps " + std::to_string(reinit_steps) + ", " +
                  fmt(elapsed) + " s"};
}

// -- 2 ---------------------------------------------------------------------
Outcome gmm_recovery() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  GmmModel truth;
  truth.dim_labels = detail::default_labels(5);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(5);
    mu[c] = 12.0;
    mu[(c + 1) % 5] = -6.0 * c;
    truth.means.push_back(mu);
    truth.covariances.push_back(test::random_spd(5, rng));
    truth.weights.push_back(1.0 / 3.0);
  }
  const Eigen::MatrixXd data = sample_mixture(truth, 50000, rng);

  SelectionOptions sel;
  sel.k_min = 1;
  sel.k_max = 6;
  sel.restarts = 1;
  sel.seed = 7;
  const auto selection = select_components(data, sel);
  if (selection.k != 3) return {false, "BIC selected K=" + std::to_string(selection.k)};

  const auto& fit = selection.fit.model;
  std::vector<std::size_t> perm{0, 1, 2};
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const Eigen::VectorXd sd = truth.covariances[c].diagonal().cwiseSqrt();
      const Eigen::VectorXd rel = (fit.means[perm[c]] - truth.means[c]).cwiseAbs().cwiseQuotient(sd);
      worst = std::max(worst, rel.maxCoeff());
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const double elapsed = seconds_since(start);
  return {best <= 0.05 && elapsed < 60.0,
          "K=3 selected, worst mean error " + fmt(best) + " std, " + fmt(elapsed) + " s"};
}

// -- 3 ---------------------------------------------------------------------
Outcome conditional_oracle() {
  std::mt19937_64 rng(303);
  GmmModel g = random_mixture(1, 5, 1.0, 0.0, rng);
  g.weights = {1.0};
  const PdmModel model(g, estimate_transitions(std::vector<std::size_t>{0, 0}, 1));
  const Eigen::MatrixXd precision = g.covariances[0].inverse();
  double worst = 0.0;
  auto state = model.init(ObservablePoint{20, 0, 0, 1});
  for (int i = 0; i < 10000; ++i) {
    const Eigen::VectorXd z = test::random_vector(4, rng, 2.0);
    const ObservablePoint zeta{z[0], z[1], z[2], z[3]};
    state = model.advance(state, zeta);
    const double oracle =
        g.means[0][4] - precision.row(4).head(4).dot(z - g.means[0].head(4)) / precision(4, 4);
    worst = std::max(worst, std::abs(infer_yaw_rate(state, zeta, model) - oracle));
  }
  return {worst <= 1e-10, "max abs error " + fmt(worst) + " over 10000 points"};
}

// -- 4 ---------------------------------------------------------------------
Outcome forward_recursion() {
  std::mt19937_64 rng(404);
  const std::size_t k = 5;
  const GmmModel g = random_mixture(k, 5, 2.0, 0.0, rng);
  std::vector<std::size_t> seed_seq(2000);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  // Sticky chain so the sampled sequence has HMM-like structure.
  seed_seq[0] = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 1; i < seed_seq.size(); ++i) seed_seq[i] = u(rng) < 0.9 ? seed_seq[i - 1] : pick(rng);
  const PdmModel model(g, estimate_transitions(seed_seq, k));

  std::vector<std::discrete_distribution<std::size_t>> rows;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> w(k);
    for (std::size_t j = 0; j < k; ++j) w[j] = model.transitions().entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    rows.emplace_back(w.begin(), w.end());
  }
  std::vector<Eigen::MatrixXd> chol;
  for (const auto& c : g.covariances) chol.push_back(Eigen::LLT<Eigen::MatrixXd>(c).matrixL());
  std::normal_distribution<double> gauss;
  auto draw = [&](std::size_t mode) {
    Eigen::VectorXd e(5);
    for (Eigen::Index i = 0; i < 5; ++i) e[i] = gauss(rng);
    const Eigen::VectorXd x = g.means[mode] + chol[mode] * e;
    return ObservablePoint{x[0], x[1], x[2], x[3]};
  };

  std::size_t mode = 0;
  ObservablePoint z = draw(mode);
  ForwardState log_state = init_forward(z, model);
  ForwardState lin_state = log_state;
  double worst_sum = 0.0, worst_gap = 0.0;
  std::size_t resyncs = 0;
  for (std::size_t t = 1; t < 100000; ++t) {
    mode = rows[mode](rng);
    z = draw(mode);
    log_state = forward_step(log_state, z, model);
    worst_sum = std::max(worst_sum, std::abs(log_state.beta.sum() - 1.0));
    if (log_state.beta.minCoeff() < 0.0) return {false, "negative weight at step " + std::to_string(t)};
    try {
      lin_state = forward_step_linear(lin_state, z, model);
      worst_gap = std::max(worst_gap, (lin_state.beta - log_state.beta).cwiseAbs().maxCoeff());
    } catch (const NumericalUnderflow&) {
      ++resyncs;
      lin_state = log_state;
    }
  }
  return {worst_sum <= 1e-12 && worst_gap <= 1e-10,
          "max |sum-1| " + fmt(worst_sum) + ", max log/linear gap " + fmt(worst_gap) + ", underflow resyncs " +
              std::to_string(resyncs)};
}

// -- 5 ---------------------------------------------------------------------
Outcome transition_counts() {
  std::mt19937_64 rng(505);
  double worst_row = 0.0;
  for (std::size_t k : {2u, 5u, 10u}) {
    for (int rep = 0; rep < 5; ++rep) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      std::vector<std::size_t> seq(10000);
      for (auto& s : seq) s = pick(rng);
      const auto t = estimate_transitions(seq, k);
      std::vector<std::vector<std::uint64_t>> oracle(k, std::vector<std::uint64_t>(k, 0));
      for (std::size_t i = 1; i < seq.size(); ++i) ++oracle[seq[i - 1]][seq[i]];
      if (t.counts != oracle) return {false, "pair counts differ for K=" + std::to_string(k)};
      for (Eigen::Index i = 0; i < t.entries.rows(); ++i) {
        worst_row = std::max(worst_row, std::abs(t.entries.row(i).sum() - 1.0));
      }
    }
  }
  return {worst_row <= 1e-12, "counts exact on 15 sequences, max |row sum-1| " + fmt(worst_row)};
}

// -- 6 ---------------------------------------------------------------------
struct ConstantYawStub {
  double rate = 0.0;
  int init(const ObservablePoint&) const { return 0; }
  int advance(int s, const ObservablePoint&) const { return s + 1; }
  double yaw_rate(int, const ObservablePoint&) const { return rate; }
};

Outcome predictor_closed_form() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> c_dist(-0.05, 0.05);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    DrivingPoint p = test::random_point(rng);
    const double c = c_dist(rng);
    p.psidot = c;
    for (std::size_t q = 1; q <= 30; ++q) {
      PredictionRequest req;
      req.history = {observable(p)};
      req.current = p;
      req.q = q;
      const auto path = predict_path(req, ConstantYawStub{c});
      double psi = p.psi, dy = p.dy;
      for (std::size_t i = 0; i < q; ++i) {
        const double dy_next = dy + p.v * std::sin(psi) * 0.1;
        psi = psi + c * 0.1;
        dy = dy_next;
        worst = std::max({worst, std::abs(path.dy_hat[i] - dy), std::abs(path.psi_hat[i] - psi)});
      }
    }
  }
  return {worst <= 1e-12, "max abs error " + fmt(worst) + " for q=1..30"};
}

// -- 7 ---------------------------------------------------------------------
Outcome tlc_oracle() {
  std::mt19937_64 rng(707);
  const VehicleGeometry geom{};
  std::uniform_real_distribution<double> dy_dist(-0.5, 2.5), psi_dist(-0.08, 0.08), v_dist(5.0, 40.0);
  double worst = 0.0;
  std::size_t finite = 0;
  for (int i = 0; i < 1000; ++i) {
    const DrivingPoint p{0.0, v_dist(rng), psi_dist(rng), 0.0, dy_dist(rng), 0.0};
    // The vehicle approaches the monitored line when psi < 0.
    const double h = -p.psi;
    double expected = std::numeric_limits<double>::infinity();
    if (p.v * std::sin(h) > 0.0) {
      expected = std::max(0.0, (p.dy - (geom.width / 2.0 - geom.cg_to_front_axle * std::tan(h))) / (p.v * std::sin(h)));
    }
    const double got = compute_tlc(p, geom);
    if (std::isinf(expected) != std::isinf(got)) return {false, "infinite/finite mismatch at sample " + std::to_string(i)};
    if (std::isfinite(expected)) {
      ++finite;
      worst = std::max(worst, std::abs(got - expected));
    }
  }
  const bool parallel = std::isinf(compute_tlc(DrivingPoint{0, 20, 0.0, 0, 1.0, 0}, geom));
  const bool clamp = compute_tlc(DrivingPoint{0, 20, -0.02, 0, 0.3, 0}, geom) == 0.0;
  const bool literal = std::abs(time_to_lane_crossing(1.0, 0.02, 20.0, geom) - 0.3100) < 5e-5;
  return {worst <= 1e-12 && parallel && clamp && literal,
          "max abs error " + fmt(worst) + " on " + std::to_string(finite) + " finite states; psi=0 -> inf " +
              (parallel ? "yes" : "no") + "; clamp " + (clamp ? "yes" : "no")};
}

// -- 8, 9, 10: one shared cross-validated experiment -------------------------
struct SharedRun {
  Report report;
  double seconds = 0.0;
};

const SharedRun& shared_experiment() {
  static const SharedRun run = [] {
    const auto start = Clock::now();
    std::vector<DriverData> drivers;
    for (const auto& p : default_profiles(1)) {
      const auto g = generate_trace(p, 1500.0);
      ExtractionOptions ex;
      ex.driver_id = p.driver_id;
      drivers.push_back({p.driver_id, extract_events(g.trace, ex), g.truth});
    }
    ExperimentConfig cfg;
    cfg.restarts = 1;
    SharedRun out;
    out.report = run_experiment(drivers, cfg);
    out.seconds = seconds_since(start);
    return out;
  }();
  return run;
}

Outcome subset_property() {
  const auto& run = shared_experiment();
  std::size_t cells = 0;
  for (const auto& d : run.report.drivers) {
    if (!d.subset_holds) return {false, "driver " + d.driver_id + " has a TLC-PDM firing outside basic TLC"};
    const auto& basic = d.strategies[0].pooled;
    const auto& pdm = d.strategies[1].pooled;
    if (pdm.fired > basic.fired) return {false, "driver " + d.driver_id + ": eta(TLC-PDM) > eta(basic)"};
    for (const auto& c : d.sweep) {
      ++cells;
      if (c.pdm.fired > d.baseline.fired) return {false, "driver " + d.driver_id + " sweep cell violates subset"};
    }
  }
  return {run.report.subset_holds && run.seconds < 300.0,
          std::to_string(run.report.drivers.size()) + " drivers, " + std::to_string(cells) + " sweep cells, " +
              fmt(run.seconds) + " s"};
}

Outcome far_ordering() {
  const auto& agg = shared_experiment().report.aggregate;
  const auto basic = agg[0].far.rate();
  const auto pdm = agg[1].far.rate();
  if (!basic || !pdm) return {false, "no warning events"};
  return {*pdm < *basic, "FAR basic " + fmt(*basic) + " (" + std::to_string(agg[0].far.warning_events) +
                             " events), TLC-PDM " + fmt(*pdm) + " (" + std::to_string(agg[1].far.warning_events) +
                             " events)"};
}

Outcome error_trend() {
  const auto& pred = shared_experiment().report.prediction;
  std::string detail;
  bool ok = true;
  double prev = -1.0;
  for (const auto& h : pred) {
    const double m = h.mean().value_or(-1.0);
    detail += (detail.empty() ? "" : ", ") + ("q=" + std::to_string(h.q) + ": " + fmt(m));
    if (m < prev || m < 0.0) ok = false;
    prev = m;
  }
  return {ok, detail};
}

// -- 11 --------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "'" + std::string(LDW_CLI_PATH) + "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  test::TempDir dir("accept");
  const auto corpus = dir / "corpus";
  const auto log = dir / "log.txt";
  if (run_cli("generate --drivers 3 --duration 1200 --seed 11 --out '" + corpus.string() + "'", log) != 0) {
    return {false, "generate failed: " + slurp(log)};
  }
  const std::string args = "evaluate --in '" + corpus.string() + "' --folds 5 --k 4 --restarts 1 --seed 5";
  const auto a = dir / "a";
  const auto b = dir / "b";
  if (run_cli(args + " --out '" + a.string() + "'", log) != 0) return {false, "evaluate failed: " + slurp(log)};
  if (run_cli(args + " --out '" + b.string() + "'", log) != 0) return {false, "evaluate failed: " + slurp(log)};
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    const auto other = b / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      return {false, entry.path().filename().string() + " differs between runs"};
    }
  }
  return {files >= 6, std::to_string(files) + " report files byte-identical"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "EM monotonicity", em_monotonicity},
      {2, "GMM recovery and BIC selection", gmm_recovery},
      {3, "conditional-Gaussian oracle", conditional_oracle},
      {4, "forward recursion", forward_recursion},
      {5, "transition matrix", transition_counts},
      {6, "predictor closed form", predictor_closed_form},
      {7, "TLC oracle", tlc_oracle},
      {8, "subset property", subset_property},
      {9, "FAR ordering", far_ordering},
      {10, "error-vs-horizon trend", error_trend},
      {11, "end-to-end determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
