#ifndef DAISEN_METRICS_ENGINE_HPP
#define DAISEN_METRICS_ENGINE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "daisen/config.hpp"
#include "daisen/error.hpp"
#include "daisen/trace_model.hpp"
#include "daisen/trace_store.hpp"

namespace daisen {

enum class MetricKind {
  kReqInRate,
  kReqCompleteRate,
  kAvgReqLatency,
  kConcurrentTasks,
  kBufferPressure,
  kPendingReqOut,
};

inline constexpr std::array<MetricKind, 6> kAllMetrics = {
    MetricKind::kReqInRate,       MetricKind::kReqCompleteRate, MetricKind::kAvgReqLatency,
    MetricKind::kConcurrentTasks, MetricKind::kBufferPressure,  MetricKind::kPendingReqOut,
};

inline std::string_view metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::kReqInRate: return "ReqInRate";
    case MetricKind::kReqCompleteRate: return "ReqCompleteRate";
    case MetricKind::kAvgReqLatency: return "AvgReqLatency";
    case MetricKind::kConcurrentTasks: return "ConcurrentTasks";
    case MetricKind::kBufferPressure: return "BufferPressure";
    case MetricKind::kPendingReqOut: return "PendingReqOut";
  }
  return "";
}

inline std::optional<MetricKind> parse_metric(std::string_view name) {
  for (MetricKind m : kAllMetrics)
    if (metric_name(m) == name) return m;
  return std::nullopt;
}

inline bool is_occupancy(MetricKind m) {
  return m == MetricKind::kConcurrentTasks || m == MetricKind::kBufferPressure ||
         m == MetricKind::kPendingReqOut;
}

struct Interval {
  double start = 0.0;
  double end = 0.0;
};

// The part of a task the metrics need.
struct MetricSample {
  TaskKind kind = TaskKind::kOther;
  double start = 0.0;
  double end = 0.0;
};

struct MetricSeries {
  std::string component;
  MetricKind metric = MetricKind::kConcurrentTasks;
  double t0 = 0.0;
  double t1 = 0.0;
  std::size_t bins = 1;
  std::vector<double> values;  // NaN where undefined

  double bin_width() const { return (t1 - t0) / static_cast<double>(bins); }
  double bin_start(std::size_t k) const { return t0 + static_cast<double>(k) * bin_width(); }
  double bin_end(std::size_t k) const { return t0 + static_cast<double>(k + 1) * bin_width(); }
};

// Time-averaged number of intervals alive in [a, b).
inline double time_average_count(std::span<const Interval> intervals, double a, double b) {
  if (!(a < b)) throw Error(ErrorCode::kBadRange, "bin start must precede bin end");
  double covered = 0.0;
  for (const Interval& iv : intervals) {
    const double lo = std::max(iv.start, a), hi = std::min(iv.end, b);
    if (hi > lo) covered += hi - lo;
  }
  return covered / (b - a);
}

namespace metrics_detail {

struct Bins {
  double t0;
  double width;
  std::size_t count;

  double edge(std::size_t k) const { return t0 + static_cast<double>(k) * width; }

  // Bin whose [edge(k), edge(k+1)) holds x.
  std::optional<std::size_t> locate(double x) const {
    if (!(x >= t0) || !(x < edge(count))) return std::nullopt;
    auto k = static_cast<std::size_t>(std::clamp((x - t0) / width, 0.0, double(count - 1)));
    while (k > 0 && x < edge(k)) --k;
    while (k + 1 < count && x >= edge(k + 1)) ++k;
    return k;
  }
};

inline bool selects(MetricKind metric, TaskKind kind) {
  switch (metric) {
    case MetricKind::kConcurrentTasks: return true;
    case MetricKind::kPendingReqOut: return kind == TaskKind::kRequestOut;
    default: return kind == TaskKind::kRequestIn;
  }
}

}  // namespace metrics_detail

// Bins one metric over samples that all belong to `component`.
inline MetricSeries compute_series(std::span<const MetricSample> samples, std::string component,
                                   MetricKind metric, double t0, double t1, std::size_t bins) {
  if (!(t0 < t1) || !std::isfinite(t0) || !std::isfinite(t1))
    throw Error(ErrorCode::kBadRange, "metric window must satisfy t0 < t1");
  if (bins < 1) throw Error(ErrorCode::kBadRange, "bins must be at least 1");

  MetricSeries series{std::move(component), metric, t0, t1, bins, {}};
  const metrics_detail::Bins grid{t0, series.bin_width(), bins};
  std::vector<double> acc(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);

  for (const MetricSample& s : samples) {
    if (!metrics_detail::selects(metric, s.kind)) continue;
    switch (metric) {
      case MetricKind::kReqInRate:
        if (auto k = grid.locate(s.start)) ++counts[*k];
        break;
      case MetricKind::kReqCompleteRate:
        if (auto k = grid.locate(s.end)) ++counts[*k];
        break;
      case MetricKind::kAvgReqLatency:
        if (auto k = grid.locate(s.end)) {
          ++counts[*k];
          acc[*k] += s.end - s.start;
        }
        break;
      default: {
        const double lo = std::max(s.start, grid.t0);
        const double hi = std::min(s.end, grid.edge(bins));
        if (!(hi > lo)) break;
        for (std::size_t k = *grid.locate(lo); k < bins && grid.edge(k) < hi; ++k) {
          const double a = std::max(lo, grid.edge(k)), b = std::min(hi, grid.edge(k + 1));
          if (b > a) acc[k] += b - a;
        }
      }
    }
  }

  series.values.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double width = grid.edge(k + 1) - grid.edge(k);
    switch (metric) {
      case MetricKind::kReqInRate:
      case MetricKind::kReqCompleteRate:
        series.values[k] = static_cast<double>(counts[k]) / width;
        break;
      case MetricKind::kAvgReqLatency:
        series.values[k] = counts[k] ? acc[k] / static_cast<double>(counts[k])
                                     : std::numeric_limits<double>::quiet_NaN();
        break;
      default:
        series.values[k] = acc[k] / width;
    }
  }
  return series;
}

// Samples for every task at `component` that can influence a bin in
// [t0, t1): overlapping tasks plus those starting or ending on an edge.
inline std::vector<MetricSample> collect_samples(const store::Snapshot& snap,
                                                 std::string_view component, double t0, double t1) {
  std::vector<MetricSample> out;
  auto loc = snap.find_location(component);
  if (!loc) return out;
  snap.visit_candidates(*loc, t0, t1, [&](std::uint32_t row) {
    const store::TaskRow& r = snap.rows[row];
    if (r.start <= t1 && r.end >= t0) out.push_back({snap.kind(row), r.start, r.end});
  });
  return out;
}

inline MetricSeries compute_series(const store::Snapshot& snap, std::string_view component,
                                   MetricKind metric, double t0, double t1, std::size_t bins) {
  if (!(t0 < t1) || !std::isfinite(t0) || !std::isfinite(t1))
    throw Error(ErrorCode::kBadRange, "metric window must satisfy t0 < t1");
  const auto samples = collect_samples(snap, component, t0, t1);
  return compute_series(samples, std::string(component), metric, t0, t1, bins);
}

inline MetricSeries compute_series(const TraceStore& store, std::string_view component,
                                   MetricKind metric, double t0, double t1, std::size_t bins) {
  return compute_series(*store.snapshot(), component, metric, t0, t1, bins);
}

// Anticipated metric values, read from an expectations file. Each key is a
// regular expression matched against "<location>:<MetricName>".
class Expectations {
 public:
  static Expectations parse(std::string_view text) { return from_entries(config::parse(text)); }

  static Expectations load(const std::string& path) { return from_entries(config::parse_file(path)); }

  void set(std::string key, double value) {
    for (auto& e : entries_) {
      if (e.key == key) {
        e.value = value;
        return;
      }
    }
    entries_.push_back(make_entry(std::move(key), value));
  }

  // Value of the entry named by `hint`: an exact key, or else the first key
  // (in file order) that `hint`, read as a regular expression, finds.
  std::optional<double> peak_reference(std::string_view hint) const {
    for (const auto& e : entries_)
      if (e.key == hint) return e.value;
    std::regex re;
    try {
      re = std::regex(std::string(hint));
    } catch (const std::regex_error&) {
      return std::nullopt;
    }
    for (const auto& e : entries_)
      if (std::regex_search(e.key, re)) return e.value;
    return std::nullopt;
  }

  // Anticipated value for one component's metric, if any key matches.
  std::optional<double> anticipated(std::string_view location, MetricKind metric) const {
    const std::string subject = std::string(location) + ":" + std::string(metric_name(metric));
    for (const auto& e : entries_)
      if (e.pattern && std::regex_search(subject, *e.pattern)) return e.value;
    return std::nullopt;
  }

  bool empty() const { return entries_.empty(); }

 private:
  struct Item {
    std::string key;
    std::optional<std::regex> pattern;
    double value;
  };

  static Item make_entry(std::string key, double value) {
    Item item{std::move(key), std::nullopt, value};
    try {
      item.pattern = std::regex(item.key);
    } catch (const std::regex_error&) {
      throw Error(ErrorCode::kBadRegex, "invalid expectation key '" + item.key + "'");
    }
    return item;
  }

  static Expectations from_entries(const std::vector<config::Entry>& entries) {
    Expectations out;
    for (const auto& e : entries) out.set(e.key, config::as_number(e));
    return out;
  }

  std::vector<Item> entries_;
};

}  // namespace daisen

#endif  // DAISEN_METRICS_ENGINE_HPP
