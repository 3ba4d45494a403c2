#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldw/domain.hpp"
#include "ldw/errors.hpp"

namespace ldw {

// ---------------------------------------------------------------------------
// trace files

inline const std::vector<std::string> kRequiredColumns = {"t", "v", "psi", "rho", "dy", "psidot"};
inline const std::vector<std::string> kOptionalColumns = {"turn_signal", "lane_width", "label"};

struct TraceRow {
  DrivingPoint point;
  std::optional<bool> turn_signal;
  std::optional<double> lane_width;
  Label label = Label::Unlabeled;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct TraceFile {
  std::vector<std::string> header;
  std::vector<TraceRow> rows;
  std::string source;

  bool has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
  bool labeled() const { return has_column("label"); }
};

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_number(std::string_view text, std::size_t line, std::size_t column, std::string_view name) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ParseError(line, column, "'" + std::string(name) + "' is not a number: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// Reads a trace CSV: header `t,v,psi,rho,dy,psidot[,turn_signal,lane_width,label]`,
/// one row per 0.1 s sample. Optional columns may appear in any order after
/// the required ones.
inline TraceFile parse_trace(std::istream& in, std::string source = "<stream>") {
  TraceFile trace;
  trace.source = std::move(source);
  std::string line;
  std::size_t line_no = 0;

  // header
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (line_no == 0 || detail::trim(line).empty()) throw ParseError(1, 1, "missing header");
  std::string_view header_line = line;
  if (header_line.starts_with("\xEF\xBB\xBF")) header_line.remove_prefix(3);
  for (auto cell : detail::split_csv(header_line)) trace.header.emplace_back(cell);
  for (std::size_t c = 0; c < kRequiredColumns.size(); ++c) {
    if (c >= trace.header.size() || trace.header[c] != kRequiredColumns[c]) {
      throw ParseError(line_no, c + 1, "expected column '" + kRequiredColumns[c] + "'");
    }
  }
  for (std::size_t c = kRequiredColumns.size(); c < trace.header.size(); ++c) {
    if (std::find(kOptionalColumns.begin(), kOptionalColumns.end(), trace.header[c]) == kOptionalColumns.end()) {
      throw ParseError(line_no, c + 1, "unknown column '" + trace.header[c] + "'");
    }
    if (std::count(trace.header.begin(), trace.header.end(), trace.header[c]) > 1) {
      throw ParseError(line_no, c + 1, "duplicate column '" + trace.header[c] + "'");
    }
  }

  const std::size_t width = trace.header.size();
  std::optional<double> previous_t;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != width) {
      throw ParseError(line_no, std::min(cells.size(), width) + 1,
                       "expected " + std::to_string(width) + " fields, got " + std::to_string(cells.size()));
    }
    TraceRow row;
    double values[6];
    for (std::size_t c = 0; c < kRequiredColumns.size(); ++c) {
      values[c] = detail::parse_number(cells[c], line_no, c + 1, kRequiredColumns[c]);
      if (!std::isfinite(values[c])) throw ParseError(line_no, c + 1, "non-finite " + kRequiredColumns[c]);
    }
    row.point = {values[0], values[1], values[2], values[3], values[4], values[5]};
    if (row.point.v < 0.0) throw ParseError(line_no, 2, "negative speed");
    for (std::size_t c = kRequiredColumns.size(); c < width; ++c) {
      const auto& name = trace.header[c];
      const auto cell = cells[c];
      if (name == "turn_signal") {
        if (cell == "1" || cell == "true") row.turn_signal = true;
        else if (cell == "0" || cell == "false") row.turn_signal = false;
        else throw ParseError(line_no, c + 1, "turn_signal must be 0/1/true/false");
      } else if (name == "lane_width") {
        const double w = detail::parse_number(cell, line_no, c + 1, name);
        if (!(w > 0.0) || !std::isfinite(w)) throw ParseError(line_no, c + 1, "lane_width must be positive");
        row.lane_width = w;
      } else {
        const auto label = parse_label(cell);
        if (!label) throw ParseError(line_no, c + 1, "label must be NONE, LDB or DCB");
        row.label = *label;
      }
    }
    if (previous_t) {
      if (!(row.point.t > *previous_t)) {
        throw NonMonotonicTime("line " + std::to_string(line_no) + ": t=" + format_double(row.point.t) +
                               " does not increase past " + format_double(*previous_t));
      }
      if (std::abs(row.point.t - *previous_t - kSampleInterval) > 1e-6) {
        throw ParseError(line_no, 1, "sampling interval is not 0.1 s");
      }
    }
    previous_t = row.point.t;
    trace.rows.push_back(row);
  }
  return trace;
}

inline TraceFile read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open trace " + path.string());
  return parse_trace(in, path.string());
}

inline void write_trace(std::ostream& out, const TraceFile& trace) {
  const auto& header = trace.header.empty() ? kRequiredColumns : trace.header;
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : trace.rows) {
    const auto& p = row.point;
    out << format_double(p.t) << ',' << format_double(p.v) << ',' << format_double(p.psi) << ','
        << format_double(p.rho) << ',' << format_double(p.dy) << ',' << format_double(p.psidot);
    for (std::size_t c = kRequiredColumns.size(); c < header.size(); ++c) {
      out << ',';
      if (header[c] == "turn_signal") out << (row.turn_signal.value_or(false) ? 1 : 0);
      else if (header[c] == "lane_width") out << format_double(row.lane_width.value_or(kStandardLaneWidth));
      else if (row.label != Label::Unlabeled) out << to_string(row.label);
    }
    out << '\n';
  }
}

inline void write_trace(const std::filesystem::path& path, const TraceFile& trace) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write trace " + path.string());
  write_trace(out, trace);
  if (!out) throw IoFailure("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// event extraction

struct ExtractionOptions {
  double case_threshold = 0.5;        // m; dy at or below marks a case point
  double window = 15.0;               // s on each side of a case point
  double max_curvature = 1e-4;        // 1/m
  double lane_width = kStandardLaneWidth;
  double lane_width_tolerance = 0.2;  // m
  double adjacent_center_tolerance = 0.3;  // m
  double min_duration = 15.0;         // s
  std::string driver_id;
};

namespace detail {

inline bool point_usable(const TraceRow& row, const ExtractionOptions& o) {
  if (!(std::abs(row.point.rho) <= o.max_curvature)) return false;
  if (row.lane_width && std::abs(*row.lane_width - o.lane_width) > o.lane_width_tolerance) return false;
  return true;
}

/// Terminal displacement sits on an adjacent lane's centre line.
inline bool ends_in_adjacent_lane(const TraceRow& last, const ExtractionOptions& o) {
  const double width = last.lane_width.value_or(o.lane_width);
  const double from_center = last.point.dy - width / 2.0;
  return std::abs(from_center - width) <= o.adjacent_center_tolerance ||
         std::abs(from_center + width) <= o.adjacent_center_tolerance;
}

}  // namespace detail

/// Cuts a trace into events around near-boundary case points.
///
/// Points failing the curvature or lane-width filter are removed, which can
/// split a window; each contiguous run becomes a candidate. Candidates with
/// the turn signal on, ending on an adjacent lane centre, or shorter than
/// `min_duration` are discarded. Overlapping windows merge.
inline std::vector<Event> extract_events(const TraceFile& trace, const ExtractionOptions& options = {}) {
  std::vector<Event> events;
  const std::size_t n = trace.rows.size();
  if (n == 0) return events;
  const auto half = static_cast<std::size_t>(std::llround(options.window / kSampleInterval));

  std::vector<char> usable(n);
  for (std::size_t i = 0; i < n; ++i) usable[i] = detail::point_usable(trace.rows[i], options);

  // Merged [begin, end] windows (inclusive) around case points.
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!usable[i] || !(trace.rows[i].point.dy <= options.case_threshold)) continue;
    const std::size_t begin = i >= half ? i - half : 0;
    const std::size_t end = std::min(n - 1, i + half);
    if (!windows.empty() && begin <= windows.back().second) {
      windows.back().second = std::max(windows.back().second, end);
    } else {
      windows.emplace_back(begin, end);
    }
  }

  const double min_duration = options.min_duration - 1e-9;
  for (const auto& [wb, we] : windows) {
    std::size_t i = wb;
    while (i <= we) {
      if (!usable[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 <= we && usable[j + 1]) ++j;
      const std::size_t begin = i;
      const std::size_t end = j + 1;  // exclusive
      i = j + 1;

      bool signal = false;
      for (std::size_t r = begin; r < end; ++r) signal = signal || trace.rows[r].turn_signal.value_or(false);
      if (signal) continue;
      if (detail::ends_in_adjacent_lane(trace.rows[end - 1], options)) continue;
      if (trace.rows[end - 1].point.t - trace.rows[begin].point.t < min_duration) continue;

      Event event;
      event.driver_id = options.driver_id;
      event.provenance = {trace.source, begin, end};
      event.points.reserve(end - begin);
      event.labels.reserve(end - begin);
      for (std::size_t r = begin; r < end; ++r) {
        event.points.push_back(trace.rows[r].point);
        event.labels.push_back(trace.rows[r].label);
      }
      events.push_back(std::move(event));
    }
  }
  return events;
}

/// An event as a standalone trace (required columns plus labels).
inline TraceFile to_trace(const Event& event) {
  TraceFile trace;
  trace.header = kRequiredColumns;
  trace.header.push_back("label");
  trace.source = event.provenance.source;
  for (std::size_t i = 0; i < event.points.size(); ++i) {
    TraceRow row;
    row.point = event.points[i];
    row.label = i < event.labels.size() ? event.labels[i] : Label::Unlabeled;
    trace.rows.push_back(row);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// cross-validation folds

struct FoldAssignment {
  std::size_t fold_count = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;  // event index -> fold

  std::vector<std::size_t> test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == fold) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] != fold) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> out(fold_count, 0);
    for (std::size_t f : fold_of) ++out[f];
    return out;
  }
};

/// Seeded shuffle, then round-robin assignment of events to folds.
inline FoldAssignment cv_split(std::size_t event_count, std::size_t fold_count, std::uint64_t seed) {
  if (fold_count < 2) throw InvalidConfig("fold_count must be >= 2");
  if (event_count < fold_count) {
    throw TooFewEvents(std::to_string(event_count) + " events cannot fill " + std::to_string(fold_count) + " folds");
  }
  std::vector<std::size_t> order(event_count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment out;
  out.fold_count = fold_count;
  out.seed = seed;
  out.fold_of.assign(event_count, 0);
  for (std::size_t i = 0; i < order.size(); ++i) out.fold_of[order[i]] = i % fold_count;
  return out;
}

inline FoldAssignment cv_split(const std::vector<Event>& events, std::size_t fold_count, std::uint64_t seed) {
  return cv_split(events.size(), fold_count, seed);
}

// ---------------------------------------------------------------------------
// serialization

inline void to_json(nlohmann::json& j, const Event& e) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : e.points) points.push_back({p.t, p.v, p.psi, p.rho, p.dy, p.psidot});
  std::vector<std::string> labels;
  for (auto l : e.labels) labels.emplace_back(to_string(l));
  j = nlohmann::json{{"driver_id", e.driver_id},
                     {"provenance",
                      {{"source", e.provenance.source},
                       {"row_begin", e.provenance.row_begin},
                       {"row_end", e.provenance.row_end}}},
                     {"columns", kRequiredColumns},
                     {"points", std::move(points)},
                     {"labels", std::move(labels)}};
}

inline void from_json(const nlohmann::json& j, Event& e) {
  e.driver_id = j.value("driver_id", "");
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    e.provenance = {p.value("source", ""), p.value("row_begin", std::size_t{0}), p.value("row_end", std::size_t{0})};
  }
  e.points.clear();
  for (const auto& row : j.at("points")) {
    const auto v = row.get<std::vector<double>>();
    if (v.size() != kRequiredColumns.size()) throw InvalidConfig("event point must have 6 values");
    DrivingPoint p{v[0], v[1], v[2], v[3], v[4], v[5]};
    if (!validate_point(p)) throw InvalidConfig("event contains an invalid point");
    e.points.push_back(p);
  }
  e.labels.clear();
  for (const auto& l : j.value("labels", std::vector<std::string>{})) {
    const auto label = parse_label(l);
    if (!label) throw InvalidConfig("unknown label '" + l + "'");
    e.labels.push_back(*label);
  }
  if (e.labels.empty()) e.labels.assign(e.points.size(), Label::Unlabeled);
  if (e.labels.size() != e.points.size()) throw InvalidConfig("event labels and points differ in length");
}

inline void to_json(nlohmann::json& j, const FoldAssignment& f) {
  j = nlohmann::json{{"fold_count", f.fold_count}, {"seed", f.seed}, {"fold_of", f.fold_of}};
}

inline void from_json(const nlohmann::json& j, FoldAssignment& f) {
  j.at("fold_count").get_to(f.fold_count);
  j.at("seed").get_to(f.seed);
  j.at("fold_of").get_to(f.fold_of);
}

}  // namespace ldw
