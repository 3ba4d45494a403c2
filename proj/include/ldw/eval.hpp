#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldw/dataio.hpp"
#include "ldw/domain.hpp"
#include "ldw/errors.hpp"
#include "ldw/gmm.hpp"
#include "ldw/hmm.hpp"
#include "ldw/predictor.hpp"
#include "ldw/synth.hpp"
#include "ldw/warning.hpp"

namespace ldw {

// ---------------------------------------------------------------------------
// metrics

/// Fired decisions over all evaluated points.
inline double warning_frequency(std::span<const WarningDecision> decisions, std::size_t total_points) {
  if (total_points == 0) throw ZeroTotal("warning frequency over zero points");
  const auto fired = static_cast<std::size_t>(
      std::count_if(decisions.begin(), decisions.end(), [](const WarningDecision& d) { return d.fired; }));
  if (fired > total_points) throw InvalidRequest("more fired decisions than points");
  return static_cast<double>(fired) / static_cast<double>(total_points);
}

struct WarningEvent {
  double onset = 0.0;
  double last = 0.0;
  std::size_t points = 0;
};

/// Groups fired decisions into warning events. A fired point less than
/// `max_gap` seconds after the previous one continues the current event.
inline std::vector<WarningEvent> collapse_warning_events(std::span<const WarningDecision> decisions,
                                                         double max_gap = 1.0) {
  std::vector<double> times;
  for (const auto& d : decisions) {
    if (d.fired) times.push_back(d.t);
  }
  std::sort(times.begin(), times.end());
  std::vector<WarningEvent> events;
  for (double t : times) {
    if (!events.empty() && t - events.back().last < max_gap - 1e-9) {
      events.back().last = t;
      ++events.back().points;
    } else {
      events.push_back({t, t, 1});
    }
  }
  return events;
}

struct FarCounts {
  std::size_t false_events = 0;
  std::size_t warning_events = 0;

  std::optional<double> rate() const {
    if (warning_events == 0) return std::nullopt;
    return static_cast<double>(false_events) / static_cast<double>(warning_events);
  }
  FarCounts& operator+=(const FarCounts& o) {
    false_events += o.false_events;
    warning_events += o.warning_events;
    return *this;
  }
};

/// Decides whether a warning event starting at `onset` was false.
using FalseWarningRule = std::function<bool(double onset)>;

/// Labeled data: false iff a DCB sample lies in [onset, onset + horizon].
inline FalseWarningRule labeled_rule(const GroundTruthLog& truth, double horizon) {
  return [&truth, horizon](double onset) { return truth.occurs(Label::Dcb, onset, onset + horizon); };
}

/// Unlabeled data: false iff the measured dy q steps after onset exceeds
/// gamma2, i.e. the driver brought the vehicle back unaided.
class SurrogateRule {
 public:
  SurrogateRule(const std::vector<Event>& events, std::size_t q, double gamma2, double dt = kSampleInterval)
      : q_(q), gamma2_(gamma2), dt_(dt) {
    for (const auto& e : events) {
      for (const auto& p : e.points) dy_.emplace(std::llround(p.t / dt_), p.dy);
    }
  }

  bool operator()(double onset) const {
    const auto it = dy_.find(std::llround(onset / dt_) + static_cast<long long>(q_));
    return it != dy_.end() && it->second > gamma2_;
  }

 private:
  std::size_t q_;
  double gamma2_;
  double dt_;
  std::map<long long, double> dy_;
};

inline FarCounts false_alarm_counts(std::span<const WarningDecision> decisions, const FalseWarningRule& is_false,
                                    double max_gap = 1.0) {
  FarCounts counts;
  for (const auto& e : collapse_warning_events(decisions, max_gap)) {
    ++counts.warning_events;
    if (is_false(e.onset)) ++counts.false_events;
  }
  return counts;
}

/// False warning events over all warning events.
inline double false_alarm_rate(std::span<const WarningDecision> decisions, const GroundTruthLog& truth,
                               double horizon, double max_gap = 1.0) {
  const auto rate = false_alarm_counts(decisions, labeled_rule(truth, horizon), max_gap).rate();
  if (!rate) throw NoWarnings("no warning events; false-alarm rate undefined");
  return *rate;
}

// ---------------------------------------------------------------------------
// experiment configuration

struct SweepGrid {
  std::vector<double> gamma1 = {-0.1, -0.05, 0.0, 0.2, 0.4, 0.6};
  std::vector<double> gamma2 = {0.1, 0.2, 0.4, 0.6};
  std::vector<std::size_t> q = {5, 10, 20, 30};

  /// Grid cells inside the gamma1 <= gamma2 domain.
  std::size_t cells() const {
    std::size_t pairs = 0;
    for (double g1 : gamma1) {
      for (double g2 : gamma2) pairs += g1 <= g2 ? 1 : 0;
    }
    return pairs * q.size();
  }
};

struct ExperimentConfig {
  std::filesystem::path corpus;
  std::vector<std::string> drivers;  // empty: every driver in the corpus
  std::vector<std::string> strategies = {"BASIC_TLC", "TLC_PDM"};
  WarningConfig warning;
  VehicleGeometry geometry;
  ExtractionOptions extraction;
  std::size_t k = 10;
  std::optional<std::pair<std::size_t, std::size_t>> select_k;
  std::size_t restarts = 5;
  double epsilon = 1e-10;
  std::size_t max_iter = 500;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  std::vector<std::size_t> horizons = {5, 10, 15, 20, 25, 30};
  double far_horizon = 1.0;  // s
  double event_gap = 1.0;    // s
  bool sweep = true;
  SweepGrid grid;

  void validate() const {
    warning.validate();
    geometry.validate();
    if (strategies.empty()) throw InvalidConfig("strategy list is empty");
    if (horizons.empty()) throw InvalidConfig("prediction horizon list is empty");
    if (std::find(horizons.begin(), horizons.end(), std::size_t{0}) != horizons.end()) {
      throw InvalidConfig("prediction horizons must be >= 1");
    }
    if (sweep && grid.cells() == 0) throw InvalidConfig("sweep grid is empty");
    if (sweep && std::find(grid.q.begin(), grid.q.end(), std::size_t{0}) != grid.q.end()) {
      throw InvalidConfig("sweep q values must be >= 1");
    }
    if (folds < 2) throw InvalidConfig("need at least 2 folds");
    if (k < 1) throw InvalidConfig("K must be >= 1");
    if (select_k && (select_k->first < 1 || select_k->second < select_k->first)) {
      throw InvalidConfig("empty K selection range");
    }
    if (!(far_horizon >= 0.0)) throw InvalidConfig("FAR horizon must be >= 0");
    if (!(epsilon > 0.0)) throw InvalidConfig("epsilon must be > 0");
  }

  /// Longest rollout any metric needs.
  std::size_t max_steps() const {
    std::size_t out = std::max(warning.q, *std::max_element(horizons.begin(), horizons.end()));
    if (sweep) out = std::max(out, *std::max_element(grid.q.begin(), grid.q.end()));
    return out;
  }
};

/// Independent stream seed derived from a base seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// report types

struct StrategyTally {
  std::string strategy;
  std::size_t fired = 0;
  std::size_t points = 0;
  FarCounts far;

  std::optional<double> eta() const {
    if (points == 0) return std::nullopt;
    return static_cast<double>(fired) / static_cast<double>(points);
  }
};

struct HorizonError {
  std::size_t q = 0;
  double sum = 0.0;
  std::size_t anchors = 0;

  std::optional<double> mean() const {
    if (anchors == 0) return std::nullopt;
    return sum / static_cast<double>(anchors);
  }
};

struct SweepCell {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  std::size_t q = 0;
  StrategyTally pdm;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t k = 0;
  std::size_t train_events = 0;
  std::size_t test_events = 0;
  std::size_t train_points = 0;
  std::size_t test_points = 0;
  std::vector<StrategyTally> strategies;  // in config order
  StrategyTally baseline;                 // basic TLC, always evaluated
  std::vector<HorizonError> prediction;   // in config horizon order
  std::vector<SweepCell> sweep;
};

struct StrategySummary {
  std::string strategy;
  StrategyTally pooled;
  double eta_fold_mean = 0.0;
  std::optional<double> far_fold_mean;  // over folds with at least one warning
  std::optional<double> far_fold_std;
  std::size_t far_folds = 0;
};

struct DriverResult {
  std::string driver_id;
  std::size_t events = 0;
  std::size_t points = 0;
  std::size_t k = 0;
  std::vector<BicPoint> bic;
  std::vector<FoldResult> folds;
  std::vector<StrategySummary> strategies;
  StrategyTally baseline;
  std::vector<HorizonError> prediction;
  std::vector<SweepCell> sweep;
  bool subset_holds = true;  // every TLC-PDM firing was also a basic-TLC firing
};

struct Report {
  nlohmann::json config;
  std::vector<DriverResult> drivers;
  std::vector<StrategyTally> aggregate;  // pooled over drivers, config order
  std::vector<HorizonError> prediction;  // pooled over drivers
  bool subset_holds = true;
};

// ---------------------------------------------------------------------------
// experiment

struct DriverData {
  std::string driver_id;
  std::vector<Event> events;
  std::optional<GroundTruthLog> truth;
};

namespace eval_detail {

struct StrategySlot {
  std::string name;
  Strategy kind = Strategy::BasicTlc;
  std::optional<StrategyHandle> handle;
};

inline std::vector<StrategySlot> resolve_strategies(const ExperimentConfig& cfg, const StrategyRegistry* registry) {
  std::vector<StrategySlot> out;
  for (const auto& name : cfg.strategies) {
    if (name == to_string(Strategy::BasicTlc)) {
      out.push_back({name, Strategy::BasicTlc, std::nullopt});
      continue;
    }
    if (name == to_string(Strategy::TlcPdm)) {
      out.push_back({name, Strategy::TlcPdm, std::nullopt});
      continue;
    }
    std::optional<StrategyHandle> found;
    if (registry) {
      for (auto h : registry->handles()) {
        if (registry->name(h) == name) found = h;
      }
    }
    if (!found) throw InvalidConfig("unknown strategy '" + name + "'");
    out.push_back({name, Strategy::External, found});
  }
  return out;
}

inline double fold_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double fold_std(const std::vector<double>& v) {
  const double m = fold_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Fired decisions of one fold, one list per strategy slot.
struct FoldDecisions {
  std::vector<std::vector<WarningDecision>> strategies;
  std::vector<WarningDecision> baseline;
  std::vector<std::vector<WarningDecision>> sweep;
};

}  // namespace eval_detail

/// Cross-validated evaluation of one driver's events.
///
/// Every fold trains its own GMM and HMM layer on the other folds' events,
/// then filters each held-out event point by point. At each point one
/// rollout of the longest needed horizon is computed and shared by the
/// warning strategies, the sweep cells and the prediction-error table.
/// Prediction error is averaged over anchors that have the full longest
/// horizon of measured data ahead, so every q is scored on the same anchors.
inline DriverResult evaluate_driver(const DriverData& data, const ExperimentConfig& cfg,
                                    const StrategyRegistry* registry = nullptr, std::size_t driver_index = 0) {
  using namespace eval_detail;
  cfg.validate();
  const auto slots = resolve_strategies(cfg, registry);
  const std::size_t steps = cfg.max_steps();
  const std::size_t anchor_reach = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());

  std::vector<std::tuple<double, double, std::size_t>> cells;
  if (cfg.sweep) {
    for (double g1 : cfg.grid.gamma1) {
      for (double g2 : cfg.grid.gamma2) {
        if (g1 > g2) continue;  // outside the gamma1 <= gamma2 domain
        for (std::size_t q : cfg.grid.q) cells.emplace_back(g1, g2, q);
      }
    }
  }

  std::optional<SurrogateRule> surrogate;
  FalseWarningRule is_false;
  if (data.truth) {
    is_false = labeled_rule(*data.truth, cfg.far_horizon);
  } else {
    surrogate.emplace(data.events, cfg.warning.q, cfg.warning.gamma2, cfg.warning.dt);
    is_false = [&surrogate](double onset) { return (*surrogate)(onset); };
  }

  DriverResult result;
  result.driver_id = data.driver_id;
  result.events = data.events.size();
  for (const auto& e : data.events) result.points += e.size();

  const std::uint64_t split_seed = derive_seed(cfg.seed, 2 * driver_index);
  const std::uint64_t em_seed = derive_seed(cfg.seed, 2 * driver_index + 1);
  FoldAssignment folds;
  try {
    folds = cv_split(data.events, cfg.folds, split_seed);
  } catch (Error& e) {
    e.add_context("driver " + data.driver_id);
    throw;
  }

  std::size_t k = cfg.k;
  for (std::size_t fold = 0; fold < cfg.folds; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    try {
      const auto train_idx = folds.train_indices(fold);
      const auto test_idx = folds.test_indices(fold);
      std::vector<std::vector<DrivingPoint>> train_seqs;
      std::vector<DrivingPoint> train_points;
      for (auto i : train_idx) {
        train_seqs.push_back(data.events[i].points);
        train_points.insert(train_points.end(), data.events[i].points.begin(), data.events[i].points.end());
      }
      const Eigen::MatrixXd train = to_matrix(train_points);
      fr.train_events = train_idx.size();
      fr.test_events = test_idx.size();
      fr.train_points = train_points.size();

      std::optional<GmmFit> fit;
      if (cfg.select_k && fold == 0) {
        SelectionOptions sel;
        sel.k_min = cfg.select_k->first;
        sel.k_max = cfg.select_k->second;
        sel.seed = em_seed;
        sel.epsilon = cfg.epsilon;
        sel.max_iter = cfg.max_iter;
        sel.restarts = cfg.restarts;
        auto selection = select_components(train, sel);
        k = selection.k;
        result.bic = selection.curve;
        fit = std::move(selection.fit);
      } else {
        EmOptions em;
        em.components = k;
        em.init = InitStrategy::kmeanspp(cfg.restarts);
        em.epsilon = cfg.epsilon;
        em.max_iter = cfg.max_iter;
        em.seed = em_seed;
        fit = em_fit(train, em);
      }
      fr.k = k;
      const PdmModel model = build_pdm(std::move(fit->model), train_seqs);

      FoldDecisions fired;
      fired.strategies.resize(slots.size());
      fired.sweep.resize(cells.size());
      for (const auto& name : cfg.strategies) fr.strategies.push_back({name, 0, 0, {}});
      fr.baseline.strategy = std::string(to_string(Strategy::BasicTlc));
      for (const auto& [g1, g2, q] : cells) fr.sweep.push_back({g1, g2, q, {std::string(to_string(Strategy::TlcPdm)), 0, 0, {}}});
      for (auto h : cfg.horizons) fr.prediction.push_back({h, 0.0, 0});

      for (auto ei : test_idx) {
        const auto& pts = data.events[ei].points;
        fr.test_points += pts.size();
        std::optional<ForwardState> state;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const DrivingPoint& p = pts[i];
          const ObservablePoint zeta = observable(p);
          state = state ? model.advance(*state, zeta) : model.init(zeta);
          const PredictedPath path = rollout<PdmModel>(*state, p, steps, cfg.warning.dt, model);
          const double tlc = compute_tlc(p, cfg.geometry);
          const std::span<const double> dy_hat(path.dy_hat);

          const auto basic = basic_alarm(tlc, cfg.warning, p.t);
          if (basic.fired) fired.baseline.push_back(basic);
          for (std::size_t s = 0; s < slots.size(); ++s) {
            WarningDecision d;
            switch (slots[s].kind) {
              case Strategy::BasicTlc: d = basic; break;
              case Strategy::TlcPdm: d = pdm_alarm(p.t, tlc, p.dy, dy_hat.first(cfg.warning.q), cfg.warning); break;
              case Strategy::External: {
                PredictedPath cut = path;
                cut.dy_hat.resize(cfg.warning.q);
                cut.psi_hat.resize(cfg.warning.q);
                cut.psidot_hat.resize(cfg.warning.q);
                d = registry->evaluate(*slots[s].handle, p, cut, tlc);
                break;
              }
            }
            if (d.fired) {
              fired.strategies[s].push_back(d);
              if (slots[s].kind == Strategy::TlcPdm && !basic.fired) result.subset_holds = false;
            }
          }
          for (std::size_t c = 0; c < cells.size(); ++c) {
            WarningConfig wc = cfg.warning;
            std::tie(wc.gamma1, wc.gamma2, wc.q) = cells[c];
            const auto d = pdm_alarm(p.t, tlc, p.dy, dy_hat.first(wc.q), wc);
            if (d.fired) {
              fired.sweep[c].push_back(d);
              if (!basic.fired) result.subset_holds = false;
            }
          }
          if (i + anchor_reach < pts.size()) {
            for (auto& h : fr.prediction) {
              double err = 0.0;
              for (std::size_t j = 0; j < h.q; ++j) err += std::abs(path.dy_hat[j] - pts[i + 1 + j].dy);
              h.sum += err / static_cast<double>(h.q);
              ++h.anchors;
            }
          }
        }
      }

      auto finish = [&](StrategyTally& tally, const std::vector<WarningDecision>& decisions) {
        tally.fired = decisions.size();
        tally.points = fr.test_points;
        tally.far = false_alarm_counts(decisions, is_false, cfg.event_gap);
      };
      for (std::size_t s = 0; s < slots.size(); ++s) {
        finish(fr.strategies[s], fired.strategies[s]);
      }
      finish(fr.baseline, fired.baseline);
      for (std::size_t c = 0; c < cells.size(); ++c) finish(fr.sweep[c].pdm, fired.sweep[c]);
    } catch (Error& e) {
      e.add_context("driver " + data.driver_id + ", fold " + std::to_string(fold));
      throw;
    }
    result.folds.push_back(std::move(fr));
  }
  result.k = k;

  // Pooled and fold-averaged summaries.
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
    StrategySummary sum;
    sum.strategy = cfg.strategies[s];
    sum.pooled.strategy = sum.strategy;
    std::vector<double> etas, fars;
    for (const auto& f : result.folds) {
      const auto& t = f.strategies[s];
      sum.pooled.fired += t.fired;
      sum.pooled.points += t.points;
      sum.pooled.far += t.far;
      etas.push_back(t.eta().value_or(0.0));
      if (auto r = t.far.rate()) fars.push_back(*r);
    }
    sum.eta_fold_mean = fold_mean(etas);
    sum.far_folds = fars.size();
    if (!fars.empty()) {
      sum.far_fold_mean = fold_mean(fars);
      sum.far_fold_std = fold_std(fars);
    }
    result.strategies.push_back(std::move(sum));
  }
  result.baseline.strategy = std::string(to_string(Strategy::BasicTlc));
  for (const auto& f : result.folds) {
    result.baseline.fired += f.baseline.fired;
    result.baseline.points += f.baseline.points;
    result.baseline.far += f.baseline.far;
  }
  for (auto h : cfg.horizons) result.prediction.push_back({h, 0.0, 0});
  for (const auto& f : result.folds) {
    for (std::size_t i = 0; i < f.prediction.size(); ++i) {
      result.prediction[i].sum += f.prediction[i].sum;
      result.prediction[i].anchors += f.prediction[i].anchors;
    }
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    SweepCell cell = result.folds.front().sweep[c];
    cell.pdm = {cell.pdm.strategy, 0, 0, {}};
    for (const auto& f : result.folds) {
      cell.pdm.fired += f.sweep[c].pdm.fired;
      cell.pdm.points += f.sweep[c].pdm.points;
      cell.pdm.far += f.sweep[c].pdm.far;
    }
    result.sweep.push_back(std::move(cell));
  }
  return result;
}

/// Loads a corpus directory: manifest.json when present, otherwise every
/// *.csv in name order. Ground truth comes from the sidecar log, else from
/// the trace's label column; traces without either use the surrogate rule.
inline std::vector<DriverData> load_corpus(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(cfg.corpus)) throw IoFailure("corpus directory not found: " + cfg.corpus.string());

  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> entries;
  const fs::path manifest_path = cfg.corpus / "manifest.json";
  if (fs::exists(manifest_path)) {
    const CorpusManifest manifest = read_json_file(manifest_path).get<CorpusManifest>();
    for (const auto& e : manifest.entries) {
      entries.push_back({e.driver_id,
                         {cfg.corpus / e.trace_file, e.truth_file.empty() ? fs::path{} : cfg.corpus / e.truth_file}});
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(cfg.corpus)) {
      if (de.is_regular_file() && de.path().extension() == ".csv") files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const fs::path truth = cfg.corpus / (f.stem().string() + ".truth.json");
      entries.push_back({f.stem().string(), {f, fs::exists(truth) ? truth : fs::path{}}});
    }
  }
  if (!cfg.drivers.empty()) {
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> chosen;
    for (const auto& id : cfg.drivers) {
      auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == id; });
      if (it == entries.end()) throw InvalidConfig("driver '" + id + "' not in corpus " + cfg.corpus.string());
      chosen.push_back(*it);
    }
    entries = std::move(chosen);
  }
  if (entries.empty()) throw IoFailure("corpus has no traces: " + cfg.corpus.string());

  std::vector<DriverData> out;
  for (const auto& [id, paths] : entries) {
    DriverData d;
    d.driver_id = id;
    const TraceFile trace = read_trace(paths.first);
    ExtractionOptions ex = cfg.extraction;
    ex.driver_id = id;
    d.events = extract_events(trace, ex);
    if (!paths.second.empty() && fs::exists(paths.second)) {
      d.truth = read_json_file(paths.second).get<GroundTruthLog>();
    } else {
      d.truth = truth_from_trace(trace, id);
    }
    out.push_back(std::move(d));
  }
  return out;
}

nlohmann::json to_json_config(const ExperimentConfig& cfg);

/// Runs the cross-validated experiment over in-memory driver data, in
/// driver order.
inline Report run_experiment(const std::vector<DriverData>& drivers, const ExperimentConfig& cfg,
                             const StrategyRegistry* registry = nullptr) {
  cfg.validate();
  Report report;
  report.config = to_json_config(cfg);
  for (const auto& name : cfg.strategies) report.aggregate.push_back({name, 0, 0, {}});
  for (auto h : cfg.horizons) report.prediction.push_back({h, 0.0, 0});
  for (std::size_t i = 0; i < drivers.size(); ++i) {
    DriverResult r = evaluate_driver(drivers[i], cfg, registry, i);
    for (std::size_t s = 0; s < r.strategies.size(); ++s) {
      report.aggregate[s].fired += r.strategies[s].pooled.fired;
      report.aggregate[s].points += r.strategies[s].pooled.points;
      report.aggregate[s].far += r.strategies[s].pooled.far;
    }
    for (std::size_t h = 0; h < r.prediction.size(); ++h) {
      report.prediction[h].sum += r.prediction[h].sum;
      report.prediction[h].anchors += r.prediction[h].anchors;
    }
    report.subset_holds = report.subset_holds && r.subset_holds;
    report.drivers.push_back(std::move(r));
  }
  return report;
}

inline Report run_experiment(const ExperimentConfig& cfg, const StrategyRegistry* registry = nullptr) {
  cfg.validate();
  return run_experiment(load_corpus(cfg), cfg, registry);
}

// ---------------------------------------------------------------------------
// serialization

namespace eval_detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json tally_json(const StrategyTally& t) {
  return {{"strategy", t.strategy},
          {"fired", t.fired},
          {"points", t.points},
          {"eta", optional_number(t.eta())},
          {"false_events", t.far.false_events},
          {"warning_events", t.far.warning_events},
          {"far", optional_number(t.far.rate())}};
}

inline nlohmann::json horizon_json(const HorizonError& h) {
  return {{"q", h.q}, {"anchors", h.anchors}, {"sum", h.sum}, {"mean_abs_error", optional_number(h.mean())}};
}

inline nlohmann::json cell_json(const SweepCell& c, const StrategyTally& basic) {
  return {{"gamma1", c.gamma1}, {"gamma2", c.gamma2}, {"q", c.q}, {"tlc_pdm", tally_json(c.pdm)},
          {"basic_tlc", tally_json(basic)}};
}

}  // namespace eval_detail

inline nlohmann::json to_json_config(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["corpus"] = cfg.corpus.generic_string();
  j["drivers"] = cfg.drivers;
  j["strategies"] = cfg.strategies;
  j["tau"] = cfg.warning.tau;
  j["gamma1"] = cfg.warning.gamma1;
  j["gamma2"] = cfg.warning.gamma2;
  j["q"] = cfg.warning.q;
  j["dt"] = cfg.warning.dt;
  j["vehicle_width"] = cfg.geometry.width;
  j["cg_to_front_axle"] = cfg.geometry.cg_to_front_axle;
  j["k"] = cfg.k;
  j["select_k"] = cfg.select_k ? nlohmann::json{cfg.select_k->first, cfg.select_k->second} : nlohmann::json(nullptr);
  j["restarts"] = cfg.restarts;
  j["epsilon"] = cfg.epsilon;
  j["max_iter"] = cfg.max_iter;
  j["folds"] = cfg.folds;
  j["seed"] = cfg.seed;
  j["horizons"] = cfg.horizons;
  j["far_horizon"] = cfg.far_horizon;
  j["event_gap"] = cfg.event_gap;
  j["sweep"] = cfg.sweep;
  j["sweep_gamma1"] = cfg.grid.gamma1;
  j["sweep_gamma2"] = cfg.grid.gamma2;
  j["sweep_q"] = cfg.grid.q;
  return j;
}

/// Overlays the keys present in `j` onto `cfg`; unknown keys are rejected.
inline void apply_config_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  if (!j.is_object()) throw InvalidConfig("experiment config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "corpus") cfg.corpus = value.get<std::string>();
      else if (key == "drivers") cfg.drivers = value.get<std::vector<std::string>>();
      else if (key == "strategies") cfg.strategies = value.get<std::vector<std::string>>();
      else if (key == "tau") cfg.warning.tau = value.get<double>();
      else if (key == "gamma1") cfg.warning.gamma1 = value.get<double>();
      else if (key == "gamma2") cfg.warning.gamma2 = value.get<double>();
      else if (key == "q") cfg.warning.q = value.get<std::size_t>();
      else if (key == "dt") cfg.warning.dt = value.get<double>();
      else if (key == "vehicle_width") cfg.geometry.width = value.get<double>();
      else if (key == "cg_to_front_axle") cfg.geometry.cg_to_front_axle = value.get<double>();
      else if (key == "k") cfg.k = value.get<std::size_t>();
      else if (key == "select_k") {
        if (value.is_null()) cfg.select_k.reset();
        else cfg.select_k = std::pair{value.at(0).get<std::size_t>(), value.at(1).get<std::size_t>()};
      } else if (key == "restarts") cfg.restarts = value.get<std::size_t>();
      else if (key == "epsilon") cfg.epsilon = value.get<double>();
      else if (key == "max_iter") cfg.max_iter = value.get<std::size_t>();
      else if (key == "folds") cfg.folds = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "horizons") cfg.horizons = value.get<std::vector<std::size_t>>();
      else if (key == "far_horizon") cfg.far_horizon = value.get<double>();
      else if (key == "event_gap") cfg.event_gap = value.get<double>();
      else if (key == "sweep") cfg.sweep = value.get<bool>();
      else if (key == "sweep_gamma1") cfg.grid.gamma1 = value.get<std::vector<double>>();
      else if (key == "sweep_gamma2") cfg.grid.gamma2 = value.get<std::vector<double>>();
      else if (key == "sweep_q") cfg.grid.q = value.get<std::vector<std::size_t>>();
      else throw InvalidConfig("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad config value: ") + e.what());
  }
}

inline nlohmann::json to_json(const Report& report) {
  using namespace eval_detail;
  nlohmann::json drivers = nlohmann::json::array();
  for (const auto& d : report.drivers) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : d.folds) {
      nlohmann::json strategies = nlohmann::json::array();
      for (const auto& t : f.strategies) strategies.push_back(tally_json(t));
      nlohmann::json prediction = nlohmann::json::array();
      for (const auto& h : f.prediction) prediction.push_back(horizon_json(h));
      folds.push_back({{"fold", f.fold},
                       {"k", f.k},
                       {"train_events", f.train_events},
                       {"test_events", f.test_events},
                       {"train_points", f.train_points},
                       {"test_points", f.test_points},
                       {"strategies", std::move(strategies)},
                       {"prediction_error", std::move(prediction)}});
    }
    nlohmann::json strategies = nlohmann::json::array();
    for (const auto& s : d.strategies) {
      nlohmann::json sj = tally_json(s.pooled);
      sj["eta_fold_mean"] = s.eta_fold_mean;
      sj["far_fold_mean"] = optional_number(s.far_fold_mean);
      sj["far_fold_std"] = optional_number(s.far_fold_std);
      sj["far_folds"] = s.far_folds;
      strategies.push_back(std::move(sj));
    }
    nlohmann::json bic = nlohmann::json::array();
    for (const auto& b : d.bic) bic.push_back({{"k", b.k}, {"bic", b.bic}});
    nlohmann::json prediction = nlohmann::json::array();
    for (const auto& h : d.prediction) prediction.push_back(horizon_json(h));
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& c : d.sweep) sweep.push_back(cell_json(c, d.baseline));
    drivers.push_back({{"driver_id", d.driver_id},
                       {"events", d.events},
                       {"points", d.points},
                       {"k", d.k},
                       {"bic", std::move(bic)},
                       {"folds", std::move(folds)},
                       {"strategies", std::move(strategies)},
                       {"prediction_error", std::move(prediction)},
                       {"sweep", std::move(sweep)},
                       {"subset_holds", d.subset_holds}});
  }
  nlohmann::json aggregate = nlohmann::json::array();
  for (const auto& t : report.aggregate) aggregate.push_back(tally_json(t));
  nlohmann::json prediction = nlohmann::json::array();
  for (const auto& h : report.prediction) prediction.push_back(horizon_json(h));
  return {{"config", report.config},
          {"drivers", std::move(drivers)},
          {"aggregate", {{"strategies", std::move(aggregate)}, {"prediction_error", std::move(prediction)}}},
          {"subset_holds", report.subset_holds}};
}

namespace eval_detail {

inline std::string csv_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << text;
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace eval_detail

/// report.json plus one CSV table per figure: eta, far, prediction_error,
/// bic and sweep.
inline void write_report(const Report& report, const std::filesystem::path& dir) {
  using namespace eval_detail;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create report directory " + dir.string() + ": " + ec.message());
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");

  std::ostringstream eta, far, pe, bic, sweep;
  eta << "driver,strategy,fired,points,eta,eta_fold_mean\n";
  far << "driver,strategy,false_events,warning_events,far,far_fold_mean,far_fold_std\n";
  pe << "driver,q,anchors,mean_abs_error\n";
  bic << "driver,k,bic\n";
  sweep << "driver,gamma1,gamma2,q,eta_tlc_pdm,eta_basic_tlc,far_tlc_pdm,far_basic_tlc\n";
  for (const auto& d : report.drivers) {
    for (const auto& s : d.strategies) {
      eta << d.driver_id << ',' << s.strategy << ',' << s.pooled.fired << ',' << s.pooled.points << ','
          << csv_number(s.pooled.eta()) << ',' << format_double(s.eta_fold_mean) << '\n';
      far << d.driver_id << ',' << s.strategy << ',' << s.pooled.far.false_events << ','
          << s.pooled.far.warning_events << ',' << csv_number(s.pooled.far.rate()) << ','
          << csv_number(s.far_fold_mean) << ',' << csv_number(s.far_fold_std) << '\n';
    }
    for (const auto& h : d.prediction) {
      pe << d.driver_id << ',' << h.q << ',' << h.anchors << ',' << csv_number(h.mean()) << '\n';
    }
    for (const auto& b : d.bic) bic << d.driver_id << ',' << b.k << ',' << format_double(b.bic) << '\n';
    for (const auto& c : d.sweep) {
      sweep << d.driver_id << ',' << format_double(c.gamma1) << ',' << format_double(c.gamma2) << ',' << c.q << ','
            << csv_number(c.pdm.eta()) << ',' << csv_number(d.baseline.eta()) << ',' << csv_number(c.pdm.far.rate())
            << ',' << csv_number(d.baseline.far.rate()) << '\n';
    }
  }
  for (const auto& t : report.aggregate) {
    eta << "ALL," << t.strategy << ',' << t.fired << ',' << t.points << ',' << csv_number(t.eta()) << ",\n";
    far << "ALL," << t.strategy << ',' << t.far.false_events << ',' << t.far.warning_events << ','
        << csv_number(t.far.rate()) << ",,\n";
  }
  for (const auto& h : report.prediction) {
    pe << "ALL," << h.q << ',' << h.anchors << ',' << csv_number(h.mean()) << '\n';
  }
  write_text(dir / "eta.csv", eta.str());
  write_text(dir / "far.csv", far.str());
  write_text(dir / "prediction_error.csv", pe.str());
  write_text(dir / "bic.csv", bic.str());
  write_text(dir / "sweep.csv", sweep.str());
}

}  // namespace ldw
