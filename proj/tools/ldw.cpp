// Command-line front end: generate, extract, train, predict, evaluate, sweep.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ldw/ldw.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string in;
  std::string out;
  std::string driver;
  std::string model;
  std::string event;
  std::string profiles;
  std::string config;
  std::string strategies = "BASIC_TLC,TLC_PDM";
  std::string select_k;
  std::string sweep_gamma1;
  std::string sweep_gamma2;
  std::string sweep_q;
  std::string horizons = "5,10,15,20,25,30";
  std::uint64_t seed = 1;
  std::size_t k = 10;
  std::size_t q = 10;
  std::size_t folds = 10;
  std::size_t restarts = 5;
  std::size_t max_iter = 500;
  std::size_t drivers = 10;
  std::size_t event_index = 0;
  std::optional<std::size_t> at;
  double dt = ldw::kSampleInterval;
  double tau = 1.0;
  double gamma1 = -0.05;
  double gamma2 = 0.1;
  double horizon = 1.0;
  double epsilon = 1e-10;
  double duration = 21600.0;
  double lane_width = ldw::kStandardLaneWidth;
  double kinematics_noise = 0.0;
};

// Flag values that are syntactically fine but unusable.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(item, &used));
      } else {
        const long long v = std::stoll(item, &used);
        if (v < 0) throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(v));
      }
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": bad list entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw UsageError("--select-k expects <min..max>, got '" + text + "'");
  try {
    const auto lo = std::stoul(text.substr(0, dots));
    const auto hi = std::stoul(text.substr(dots + 2));
    if (lo < 1 || hi < lo) throw std::invalid_argument("range");
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("--select-k expects <min..max> with 1 <= min <= max, got '" + text + "'");
  }
}

void require_input(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw ldw::IoFailure("input not found: " + path);
}

void require_output(const std::string& path) {
  if (path.empty()) throw UsageError("--out is required");
}

std::uint64_t resolve_seed(const CLI::App& cmd, const Options& o) {
  if (cmd.count("--seed") > 0) return o.seed;
  if (const char* env = std::getenv("LDW_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("LDW_SEED is not an unsigned integer: '") + env + "'");
  }
  return o.seed;
}

ldw::WarningConfig warning_config(const Options& o) {
  ldw::WarningConfig w;
  w.tau = o.tau;
  w.gamma1 = o.gamma1;
  w.gamma2 = o.gamma2;
  w.q = o.q;
  w.dt = o.dt;
  return w;
}

void write_json(const std::string& path, const json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  ldw::write_json_file(p, j);
}

// Events JSON may hold one event, an array of events, or {"events": [...]}.
std::vector<ldw::Event> read_events(const std::string& path) {
  const json j = ldw::read_json_file(path);
  try {
    if (j.is_array()) return j.get<std::vector<ldw::Event>>();
    if (j.is_object() && j.contains("events")) return j.at("events").get<std::vector<ldw::Event>>();
    return {j.get<ldw::Event>()};
  } catch (const json::exception& e) {
    throw ldw::IoFailure("invalid event file " + path + ": " + e.what());
  }
}

// Events and trace for one driver: --in is a trace CSV or a corpus directory.
std::vector<ldw::Event> driver_events(const Options& o) {
  ldw::ExtractionOptions ex;
  ex.lane_width = o.lane_width;
  if (fs::is_directory(o.in)) {
    ldw::ExperimentConfig cfg;
    cfg.corpus = o.in;
    cfg.extraction = ex;
    if (!o.driver.empty()) cfg.drivers = {o.driver};
    auto data = ldw::load_corpus(cfg);
    if (o.driver.empty() && data.size() > 1) throw UsageError("--driver is required for a multi-driver corpus");
    return data.front().events;
  }
  ex.driver_id = o.driver.empty() ? fs::path(o.in).stem().string() : o.driver;
  return ldw::extract_events(ldw::read_trace(o.in), ex);
}

// ---------------------------------------------------------------------------
// subcommands

int run_generate(const CLI::App& cmd, const Options& o) {
  require_output(o.out);
  const std::uint64_t seed = resolve_seed(cmd, o);
  std::vector<ldw::DriverProfile> profiles;
  if (!o.profiles.empty()) {
    require_input(o.profiles, "--profiles");
    try {
      profiles = ldw::read_json_file(o.profiles).get<std::vector<ldw::DriverProfile>>();
    } catch (const json::exception& e) {
      throw ldw::InvalidProfile("bad profile file " + o.profiles + ": " + e.what());
    }
  } else {
    profiles = ldw::default_profiles(seed);
    if (o.drivers < 1 || o.drivers > profiles.size()) {
      throw UsageError("--drivers must be in [1, " + std::to_string(profiles.size()) + "]");
    }
    profiles.resize(o.drivers);
  }
  ldw::GeneratorOptions gen;
  gen.kinematics_noise = o.kinematics_noise;
  gen.gamma1 = o.gamma1;
  gen.gamma2 = o.gamma2;
  const auto manifest = ldw::generate_corpus(profiles, o.duration, o.out, o.lane_width, gen);
  std::cout << "wrote " << manifest.entries.size() << " traces to " << o.out << '\n';
  return 0;
}

int run_extract(const CLI::App&, const Options& o) {
  require_input(o.in, "--in");
  require_output(o.out);
  const auto events = driver_events(o);
  write_json(o.out, json{{"events", events}});
  std::cout << "wrote " << events.size() << " events to " << o.out << '\n';
  return 0;
}

int run_train(const CLI::App& cmd, const Options& o) {
  require_input(o.in, "--in");
  require_output(o.out);
  const std::uint64_t seed = resolve_seed(cmd, o);
  const auto events = driver_events(o);
  if (events.empty()) throw ldw::InsufficientData("no events extracted from " + o.in);
  std::vector<std::vector<ldw::DrivingPoint>> seqs;
  std::vector<ldw::DrivingPoint> points;
  for (const auto& e : events) {
    seqs.push_back(e.points);
    points.insert(points.end(), e.points.begin(), e.points.end());
  }
  const Eigen::MatrixXd data = ldw::to_matrix(points);

  ldw::GmmFit fit;
  std::vector<ldw::BicPoint> curve;
  if (!o.select_k.empty()) {
    const auto [lo, hi] = parse_range(o.select_k);
    ldw::SelectionOptions sel;
    sel.k_min = lo;
    sel.k_max = hi;
    sel.seed = seed;
    sel.epsilon = o.epsilon;
    sel.max_iter = o.max_iter;
    sel.restarts = o.restarts;
    auto selection = ldw::select_components(data, sel);
    curve = selection.curve;
    fit = std::move(selection.fit);
  } else {
    ldw::EmOptions em;
    em.components = o.k;
    em.init = ldw::InitStrategy::kmeanspp(o.restarts);
    em.epsilon = o.epsilon;
    em.max_iter = o.max_iter;
    em.seed = seed;
    fit = ldw::em_fit(data, em);
  }
  const ldw::PdmModel model = ldw::build_pdm(fit.model, seqs);
  json j = ldw::pdm_to_json(model, &fit.report);
  j["driver_id"] = events.front().driver_id;
  j["training_events"] = events.size();
  j["training_points"] = points.size();
  j["seed"] = seed;
  json bic = json::array();
  for (const auto& b : curve) bic.push_back({{"k", b.k}, {"bic", b.bic}});
  j["bic"] = std::move(bic);
  write_json(o.out, j);
  std::cout << "trained K=" << model.modes() << " on " << points.size() << " points (" << events.size()
            << " events), wrote " << o.out << '\n';
  return 0;
}

int run_predict(const CLI::App&, const Options& o) {
  require_input(o.model, "--model");
  require_input(o.event, "--event");
  const ldw::PdmModel model = ldw::pdm_from_json(ldw::read_json_file(o.model));
  const auto events = read_events(o.event);
  if (o.event_index >= events.size()) {
    throw UsageError("--event-index " + std::to_string(o.event_index) + " out of range (" +
                     std::to_string(events.size()) + " events)");
  }
  const auto& event = events[o.event_index];
  if (event.points.empty()) throw ldw::InvalidRequest("event has no points");
  const std::size_t at = o.at.value_or(event.points.size() - 1);
  if (at >= event.points.size()) throw UsageError("--at is past the end of the event");

  ldw::PredictionRequest req;
  for (std::size_t i = 0; i <= at; ++i) req.history.push_back(ldw::observable(event.points[i]));
  req.current = event.points[at];
  req.q = o.q;
  req.dt = o.dt;
  const auto path = ldw::predict_path(req, model);

  std::ostringstream csv;
  csv << "step,t,dy_hat,psi_hat,psidot_hat\n";
  for (std::size_t i = 0; i < path.horizon(); ++i) {
    const double t = req.current.t + static_cast<double>(i + 1) * o.dt;
    csv << i + 1 << ',' << ldw::format_double(t) << ',' << ldw::format_double(path.dy_hat[i]) << ','
        << ldw::format_double(path.psi_hat[i]) << ',' << ldw::format_double(path.psidot_hat[i]) << '\n';
  }
  if (o.out.empty() || o.out == "-") {
    std::cout << csv.str();
  } else {
    const fs::path p(o.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ldw::IoFailure("cannot write " + o.out);
    f << csv.str();
  }
  return 0;
}

ldw::ExperimentConfig experiment_config(const CLI::App& cmd, const Options& o, bool sweep) {
  ldw::ExperimentConfig cfg;
  cfg.corpus = o.in;
  if (!o.driver.empty()) cfg.drivers = split_list(o.driver);
  cfg.strategies = split_list(o.strategies);
  cfg.warning = warning_config(o);
  cfg.extraction.lane_width = o.lane_width;
  cfg.k = o.k;
  if (!o.select_k.empty()) cfg.select_k = parse_range(o.select_k);
  cfg.restarts = o.restarts;
  cfg.epsilon = o.epsilon;
  cfg.max_iter = o.max_iter;
  cfg.folds = o.folds;
  cfg.seed = resolve_seed(cmd, o);
  cfg.horizons = parse_list<std::size_t>(o.horizons, "--horizons");
  cfg.far_horizon = o.horizon;
  cfg.sweep = sweep;
  if (!o.sweep_gamma1.empty()) cfg.grid.gamma1 = parse_list<double>(o.sweep_gamma1, "--sweep-gamma1");
  if (!o.sweep_gamma2.empty()) cfg.grid.gamma2 = parse_list<double>(o.sweep_gamma2, "--sweep-gamma2");
  if (!o.sweep_q.empty()) cfg.grid.q = parse_list<std::size_t>(o.sweep_q, "--sweep-q");
  cfg.validate();
  return cfg;
}

int run_evaluate(const CLI::App& cmd, const Options& o, bool sweep) {
  require_input(o.in, "--in");
  require_output(o.out);
  const auto cfg = experiment_config(cmd, o, sweep);
  const auto report = ldw::run_experiment(cfg);
  ldw::write_report(report, o.out);
  for (const auto& t : report.aggregate) {
    const auto far = t.far.rate();
    std::cout << t.strategy << ": eta=" << ldw::format_double(t.eta().value_or(0.0))
              << " far=" << (far ? ldw::format_double(*far) : std::string("n/a")) << " (" << t.far.false_events
              << '/' << t.far.warning_events << " warning events)\n";
  }
  std::cout << "wrote report to " << o.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// argument handling

// Turns a JSON config object into "--key value" arguments. They are placed
// before the command-line flags, and the last occurrence of a flag wins.
std::vector<std::string> config_arguments(const std::string& path) {
  if (!fs::exists(path)) throw ldw::IoFailure("config file not found: " + path);
  const json j = ldw::read_json_file(path);
  if (!j.is_object()) throw UsageError("config file must hold a JSON object: " + path);
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) {
        if (!joined.empty()) joined += ',';
        joined += item.is_string() ? item.get<std::string>() : item.dump();
      }
      args.push_back(flag);
      args.push_back(joined);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw UsageError("config key '" + key + "' has an unsupported value");
    }
  }
  return args;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    // The subcommand is the first non-flag argument.
    std::size_t insert_at = 0;
    while (insert_at < args.size() && args[insert_at].rfind("-", 0) == 0) ++insert_at;
    const auto extra = config_arguments(path);
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(std::min(insert_at + 1, args.size())), extra.begin(),
                extra.end());
    break;
  }
  return args;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON file supplying any flag by name; command-line flags override it");
}

void add_seed(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Random seed (unsigned integer; falls back to $LDW_SEED, then 1)");
}

void add_warning(CLI::App* cmd, Options& o) {
  cmd->add_option("--q", o.q, "Prediction horizon in steps (count of dt)")->capture_default_str();
  cmd->add_option("--dt", o.dt, "Sampling interval (s)")->capture_default_str();
  cmd->add_option("--tau", o.tau, "TLC threshold (s)")->capture_default_str();
  cmd->add_option("--gamma1", o.gamma1, "Predicted-minimum threshold on dy (m)")->capture_default_str();
  cmd->add_option("--gamma2", o.gamma2, "Predicted-terminal threshold on dy (m)")->capture_default_str();
}

void add_training(CLI::App* cmd, Options& o) {
  cmd->add_option("--k", o.k, "GMM components (count)")->capture_default_str();
  cmd->add_option("--select-k", o.select_k, "Select K by BIC over <min..max> (counts) instead of --k");
  cmd->add_option("--restarts", o.restarts, "k-means++ restarts per EM fit (count)")->capture_default_str();
  cmd->add_option("--epsilon", o.epsilon, "EM stop when the log-likelihood gain is below this (nats)")
      ->capture_default_str();
  cmd->add_option("--max-iter", o.max_iter, "EM iteration cap (count)")->capture_default_str();
  cmd->add_option("--lane-width", o.lane_width, "Lane width for event filtering (m)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Personalized driver model and lane-departure warning toolkit", "ldw"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* generate = app.add_subcommand("generate", "Write a synthetic labeled corpus");
  add_common(generate, o);
  add_seed(generate, o);
  generate->add_option("--out", o.out, "Corpus directory to create (path)");
  generate->add_option("--profiles", o.profiles, "JSON array of driver profiles (path); default: built-in styles");
  generate->add_option("--drivers", o.drivers, "Number of built-in profiles to use (count)")->capture_default_str();
  generate->add_option("--duration", o.duration, "Trace length per driver (s)")->capture_default_str();
  generate->add_option("--lane-width", o.lane_width, "Lane width (m)")->capture_default_str();
  generate->add_option("--kinematics-noise", o.kinematics_noise, "Process noise std on each dy step (m)")
      ->capture_default_str();
  generate->add_option("--gamma1", o.gamma1, "LDB episodes end below this dy (m)")->capture_default_str();
  generate->add_option("--gamma2", o.gamma2, "DCB episodes recover above this dy (m)")->capture_default_str();

  auto* extract = app.add_subcommand("extract", "Extract events from a trace or corpus");
  add_common(extract, o);
  extract->add_option("--in", o.in, "Trace CSV or corpus directory (path)");
  extract->add_option("--driver", o.driver, "Driver id within a corpus");
  extract->add_option("--out", o.out, "Events JSON to write (path)");
  extract->add_option("--lane-width", o.lane_width, "Lane width for event filtering (m)")->capture_default_str();

  auto* train = app.add_subcommand("train", "Fit a driver model on every event of one driver");
  add_common(train, o);
  add_seed(train, o);
  train->add_option("--in", o.in, "Trace CSV or corpus directory (path)");
  train->add_option("--driver", o.driver, "Driver id within a corpus");
  train->add_option("--out", o.out, "Model JSON to write (path)");
  add_training(train, o);

  auto* predict = app.add_subcommand("predict", "Predict the lateral path from one point of an event");
  add_common(predict, o);
  predict->add_option("--model", o.model, "Model JSON from `train` (path)");
  predict->add_option("--event", o.event, "Events JSON from `extract`, or a single event (path)");
  predict->add_option("--event-index", o.event_index, "Which event in the file (0-based index)")
      ->capture_default_str();
  predict->add_option("--at", o.at, "Point to predict from (0-based index; default: last point)");
  predict->add_option("--q", o.q, "Prediction horizon in steps (count of dt)")->capture_default_str();
  predict->add_option("--dt", o.dt, "Step length (s)")->capture_default_str();
  predict->add_option("--out", o.out, "CSV to write (path; default: stdout)");

  auto add_experiment = [&](CLI::App* cmd) {
    add_common(cmd, o);
    add_seed(cmd, o);
    cmd->add_option("--in", o.in, "Corpus directory (path)");
    cmd->add_option("--out", o.out, "Report directory to write (path)");
    cmd->add_option("--driver", o.driver, "Comma-separated driver ids (default: all)");
    cmd->add_option("--strategies", o.strategies, "Comma-separated strategies: BASIC_TLC, TLC_PDM")
        ->capture_default_str();
    cmd->add_option("--folds", o.folds, "Cross-validation folds (count)")->capture_default_str();
    cmd->add_option("--horizon", o.horizon, "False-alarm look-ahead after a warning (s)")->capture_default_str();
    cmd->add_option("--horizons", o.horizons, "Prediction-error horizons (comma-separated steps)")
        ->capture_default_str();
    add_warning(cmd, o);
    add_training(cmd, o);
  };
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated warning and prediction report");
  add_experiment(evaluate);
  auto* sweep = app.add_subcommand("sweep", "Evaluate plus eta/FAR grids over (gamma1, gamma2, q)");
  add_experiment(sweep);
  sweep->add_option("--sweep-gamma1", o.sweep_gamma1, "Grid of gamma1 values (comma-separated m)");
  sweep->add_option("--sweep-gamma2", o.sweep_gamma2, "Grid of gamma2 values (comma-separated m)");
  sweep->add_option("--sweep-q", o.sweep_q, "Grid of q values (comma-separated steps)");

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    std::vector<std::string> forward(args.rbegin(), args.rend());
    forward = expand_config(std::move(forward));
    args.assign(forward.rbegin(), forward.rend());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
    return kExitUsage;
  } catch (const ldw::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
    return kExitData;
  }

  try {
    if (*generate) return run_generate(*generate, o);
    if (*extract) return run_extract(*extract, o);
    if (*train) return run_train(*train, o);
    if (*predict) return run_predict(*predict, o);
    if (*evaluate) return run_evaluate(*evaluate, o, false);
    if (*sweep) return run_evaluate(*sweep, o, true);
  } catch (const UsageError& e) {
    std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
    return kExitUsage;
  } catch (const ldw::InvalidConfig& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
    return kExitUsage;
  } catch (const ldw::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << json{{"error", "IoFailure"}, {"message", e.what()}}.dump() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
