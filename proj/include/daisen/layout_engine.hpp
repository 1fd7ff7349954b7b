#ifndef DAISEN_LAYOUT_ENGINE_HPP
#define DAISEN_LAYOUT_ENGINE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daisen/error.hpp"
#include "daisen/trace_model.hpp"
#include "daisen/trace_store.hpp"

namespace daisen {

// ---------------------------------------------------------------------------
// Colour
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s = "#000000";
    const std::uint8_t c[3] = {r, g, b};
    for (int i = 0; i < 3; ++i) {
      s[1 + 2 * i] = kDigits[c[i] >> 4];
      s[2 + 2 * i] = kDigits[c[i] & 0xF];
    }
    return s;
  }

  bool operator==(const Rgb&) const = default;
};

struct CubehelixParams {
  double start = 0.5;
  double rotations = -1.5;
  double hue = 1.0;
  double gamma = 1.0;
};

// Point on the Cubehelix curve at lambda in [0, 1], channels clamped to [0, 1].
inline std::array<double, 3> cubehelix_unit(double lambda, const CubehelixParams& p = {}) {
  const double g = std::pow(lambda, p.gamma);
  const double phi = 2.0 * std::numbers::pi * (p.start / 3.0 + p.rotations * lambda);
  const double a = p.hue * g * (1.0 - g) / 2.0;
  const double c = std::cos(phi), s = std::sin(phi);
  std::array<double, 3> rgb = {
      g + a * (-0.14861 * c + 1.78277 * s),
      g + a * (-0.29227 * c - 0.90649 * s),
      g + a * (1.97294 * c),
  };
  for (double& v : rgb) v = std::clamp(v, 0.0, 1.0);
  return rgb;
}

inline Rgb cubehelix(double lambda, const CubehelixParams& p = {}) {
  const auto u = cubehelix_unit(lambda, p);
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(u[0]), q(u[1]), q(u[2])};
}

// n colours at lambda_i = (i+1)/(n+1), so neither black nor white is used.
inline std::vector<Rgb> cubehelix_palette(std::size_t n, const CubehelixParams& p = {}) {
  if (n < 1) throw Error(ErrorCode::kBadParam, "palette needs at least one colour");
  std::vector<Rgb> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(cubehelix(static_cast<double>(i + 1) / static_cast<double>(n + 1), p));
  return out;
}

enum class ColorMode { kCategoryAction, kCategoryOnly };

inline constexpr std::size_t kDefaultMaxColors = 16;

struct ColorKeyMap {
  ColorMode mode = ColorMode::kCategoryAction;
  std::vector<std::string> keys;  // sorted; palette[i] colours keys[i]
  std::vector<Rgb> palette;

  std::string key_for(std::string_view category, std::string_view action) const {
    if (mode == ColorMode::kCategoryOnly) return std::string(category);
    std::string key(category);
    key += '-';
    key += action;
    return key;
  }

  std::optional<std::size_t> index_of(std::string_view key) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it == keys.end() || *it != key) return std::nullopt;
    return static_cast<std::size_t>(it - keys.begin());
  }

  Rgb color_of(std::string_view key) const {
    auto i = index_of(key);
    return i ? palette[*i] : Rgb{128, 128, 128};
  }
};

// Keys from distinct (category, action) pairs; falls back to categories
// alone when there are more pairs than `max_colors`.
inline ColorKeyMap build_color_key(std::span<const std::pair<std::string, std::string>> pairs,
                                   std::size_t max_colors = kDefaultMaxColors) {
  if (max_colors < 1) throw Error(ErrorCode::kBadParam, "max_colors must be at least 1");
  ColorKeyMap map;
  for (const auto& [category, action] : pairs) map.keys.push_back(map.key_for(category, action));
  std::sort(map.keys.begin(), map.keys.end());
  map.keys.erase(std::unique(map.keys.begin(), map.keys.end()), map.keys.end());
  if (map.keys.size() > max_colors) {
    map.mode = ColorMode::kCategoryOnly;
    map.keys.clear();
    for (const auto& pair : pairs) map.keys.push_back(pair.first);
    std::sort(map.keys.begin(), map.keys.end());
    map.keys.erase(std::unique(map.keys.begin(), map.keys.end()), map.keys.end());
  }
  if (!map.keys.empty()) map.palette = cubehelix_palette(map.keys.size());
  return map;
}

inline ColorKeyMap build_color_key(std::span<const Task> tasks,
                                   std::size_t max_colors = kDefaultMaxColors) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const Task& t : tasks) pairs.emplace_back(t.category, t.action);
  return build_color_key(std::span<const std::pair<std::string, std::string>>(pairs), max_colors);
}

// Trace-wide key map, so colours do not change when the viewport moves.
inline ColorKeyMap build_color_key(const store::Snapshot& snap,
                                   std::size_t max_colors = kDefaultMaxColors) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [c, a] : snap.category_action_pairs)
    pairs.emplace_back(snap.categories[c], snap.actions[a]);
  return build_color_key(std::span<const std::pair<std::string, std::string>>(pairs), max_colors);
}

// ---------------------------------------------------------------------------
// Up-floating row assignment
// ---------------------------------------------------------------------------

struct RowItem {
  std::string_view id;
  double start = 0.0;
  double end = 0.0;
};

// For row packing a zero-duration item at t occupies [t, t+eps): it clashes
// with anything covering t, including other zero-duration items at t, but not
// with an interval ending at t. The pair (time, zero-length flag) orders these
// infinitesimal ends.
using RowEdge = std::pair<double, int>;

inline RowEdge row_end_edge(double start, double end) { return {end, end == start ? 1 : 0}; }

// Visits items in (start, end, id) order; each takes the top-most row whose
// last bar ended at or before its start. Returns rows parallel to `items`.
inline std::vector<std::uint32_t> assign_rows(std::span<const RowItem> items) {
  std::vector<std::uint32_t> order(items.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const RowItem& x = items[a];
    const RowItem& y = items[b];
    return std::make_tuple(x.start, row_end_edge(x.start, x.end), x.id) <
           std::make_tuple(y.start, row_end_edge(y.start, y.end), y.id);
  });

  using Busy = std::pair<RowEdge, std::uint32_t>;
  std::priority_queue<Busy, std::vector<Busy>, std::greater<>> busy;
  std::priority_queue<std::uint32_t, std::vector<std::uint32_t>, std::greater<>> free_rows;
  std::uint32_t next_row = 0;
  std::vector<std::uint32_t> rows(items.size(), 0);
  for (std::uint32_t i : order) {
    const RowEdge begin{items[i].start, 0};
    while (!busy.empty() && busy.top().first <= begin) {
      free_rows.push(busy.top().second);
      busy.pop();
    }
    std::uint32_t row;
    if (free_rows.empty()) {
      row = next_row++;
    } else {
      row = free_rows.top();
      free_rows.pop();
    }
    rows[i] = row;
    busy.push({row_end_edge(items[i].start, items[i].end), row});
  }
  return rows;
}

struct IntervalItem {
  TaskId id;
  double start = 0.0;
  double end = 0.0;
};

inline std::map<TaskId, std::uint32_t> assign_rows(std::span<const IntervalItem> intervals) {
  std::vector<RowItem> items;
  items.reserve(intervals.size());
  for (const auto& iv : intervals) items.push_back({iv.id, iv.start, iv.end});
  const auto rows = assign_rows(std::span<const RowItem>(items));
  std::map<TaskId, std::uint32_t> out;
  for (std::size_t i = 0; i < intervals.size(); ++i) out.emplace(intervals[i].id, rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Component and task views
// ---------------------------------------------------------------------------

struct Viewport {
  double t0 = 0.0;
  double t1 = 1.0;
};

struct LayoutBar {
  TaskId task_id;
  std::uint32_t level = 0;
  std::uint32_t row = 0;
  double x0 = 0.0, x1 = 0.0;  // seconds
  double y = 0.0, h = 0.0;    // normalised to the owning region
  std::string color_key;

  bool operator==(const LayoutBar&) const = default;
};

struct LayoutOptions {
  double min_px = 1.0;
  double px_per_second = 1.0;
  // Share of a parent bar's height kept for the parent itself, above its
  // nested children.
  double parent_inset = 0.15;
};

struct ComponentLayout {
  std::vector<LayoutBar> bars;  // visible bars, ordered by (level, start, id)
  std::size_t total = 0;        // bars before culling
  std::size_t culled = 0;
  std::vector<double> level_heights;  // uniform h per nesting level
  std::uint32_t root_rows = 0;
};

// One task in a component layout. `parent` indexes the node list, or is
// store::kNone for a layout root.
struct LayoutNode {
  std::string_view id;
  std::uint32_t parent = store::kNone;
  double start = 0.0;
  double end = 0.0;
  std::string color_key;
};

inline ComponentLayout layout_nodes(std::span<const LayoutNode> nodes, Viewport viewport,
                                    const LayoutOptions& options) {
  if (!(viewport.t0 < viewport.t1)) throw Error(ErrorCode::kBadRange, "viewport needs t0 < t1");
  ComponentLayout out;
  const std::size_t n = nodes.size();
  out.total = n;
  if (n == 0) return out;

  // Children clip to their parent's extent so nested bars stay inside it.
  std::vector<double> lo(n), hi(n);
  std::vector<std::vector<std::uint32_t>> kids(n);
  std::vector<std::uint32_t> roots;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (nodes[i].parent == store::kNone)
      roots.push_back(i);
    else
      kids[nodes[i].parent].push_back(i);
  }

  std::vector<std::uint32_t> level(n, 0), row(n, 0), group_rows(n, 0);
  std::vector<std::uint32_t> frontier = roots, next;
  for (std::uint32_t i : roots) {
    lo[i] = nodes[i].start;
    hi[i] = nodes[i].end;
  }
  std::vector<std::uint32_t> bfs;
  auto place_group = [&](std::span<const std::uint32_t> group) -> std::uint32_t {
    std::vector<RowItem> items;
    items.reserve(group.size());
    for (std::uint32_t i : group) items.push_back({nodes[i].id, lo[i], hi[i]});
    const auto rows = assign_rows(std::span<const RowItem>(items));
    std::uint32_t used = 0;
    for (std::size_t k = 0; k < group.size(); ++k) {
      row[group[k]] = rows[k];
      used = std::max(used, rows[k] + 1);
    }
    return used;
  };

  out.root_rows = place_group(roots);
  out.level_heights.push_back(1.0 / out.root_rows);
  for (std::uint32_t depth = 0; !frontier.empty(); ++depth) {
    next.clear();
    std::uint32_t max_rows = 0;
    for (std::uint32_t p : frontier) {
      bfs.push_back(p);
      level[p] = depth;
      if (kids[p].empty()) continue;
      for (std::uint32_t c : kids[p]) {
        lo[c] = std::clamp(nodes[c].start, lo[p], hi[p]);
        hi[c] = std::clamp(nodes[c].end, lo[p], hi[p]);
        next.push_back(c);
      }
      group_rows[p] = place_group(kids[p]);
      max_rows = std::max(max_rows, group_rows[p]);
    }
    if (max_rows > 0)
      out.level_heights.push_back((1.0 - options.parent_inset) * out.level_heights[depth] / max_rows);
    std::swap(frontier, next);
  }

  // Vertical placement follows BFS order so parents precede children.
  std::vector<double> y(n, 0.0);
  for (std::uint32_t i : bfs) {
    const double h = out.level_heights[level[i]];
    if (nodes[i].parent == store::kNone) {
      y[i] = row[i] * h;
    } else {
      const std::uint32_t p = nodes[i].parent;
      y[i] = y[p] + options.parent_inset * out.level_heights[level[p]] + row[i] * h;
    }
  }

  for (std::uint32_t i : bfs) {
    LayoutBar bar;
    bar.task_id = std::string(nodes[i].id);
    bar.level = level[i];
    bar.row = row[i];
    bar.x0 = std::max(lo[i], viewport.t0);
    bar.x1 = std::min(hi[i], viewport.t1);
    bar.y = y[i];
    bar.h = out.level_heights[level[i]];
    bar.color_key = nodes[i].color_key;
    if (bar.x1 < bar.x0 || (bar.x1 - bar.x0) * options.px_per_second < options.min_px) {
      ++out.culled;
      continue;
    }
    out.bars.push_back(std::move(bar));
  }
  std::sort(out.bars.begin(), out.bars.end(), [](const LayoutBar& a, const LayoutBar& b) {
    return std::tie(a.level, a.x0, a.task_id) < std::tie(b.level, b.x0, b.task_id);
  });
  return out;
}

// Layout of tasks that all run at one component. A task nests inside its
// parent when the parent is in `tasks` at the same location; otherwise it is
// a layout root.
inline ComponentLayout layout_component(std::span<const Task> tasks, Viewport viewport,
                                        const LayoutOptions& options, const ColorKeyMap& colors) {
  std::unordered_map<std::string_view, std::uint32_t> index;
  for (std::uint32_t i = 0; i < tasks.size(); ++i) index.emplace(tasks[i].id, i);
  std::vector<LayoutNode> nodes(tasks.size());
  for (std::uint32_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    nodes[i] = {t.id, store::kNone, t.start, t.end, colors.key_for(t.category, t.action)};
    if (t.parent_id) {
      auto it = index.find(*t.parent_id);
      if (it != index.end() && tasks[it->second].location == t.location && it->second != i)
        nodes[i].parent = it->second;
    }
  }
  return layout_nodes(nodes, viewport, options);
}

// Store-backed component layout over the tasks overlapping the viewport.
inline ComponentLayout layout_component(const store::Snapshot& snap, std::string_view component,
                                        Viewport viewport, const LayoutOptions& options,
                                        const ColorKeyMap& colors) {
  if (!(viewport.t0 < viewport.t1)) throw Error(ErrorCode::kBadRange, "viewport needs t0 < t1");
  auto loc = snap.find_location(component);
  if (!loc) return {};
  const auto rows = snap.window_rows(*loc, viewport.t0, viewport.t1);
  std::unordered_map<std::uint32_t, std::uint32_t> position;
  position.reserve(rows.size());
  for (std::uint32_t i = 0; i < rows.size(); ++i) position.emplace(rows[i], i);
  std::vector<LayoutNode> nodes(rows.size());
  for (std::uint32_t i = 0; i < rows.size(); ++i) {
    const store::TaskRow& r = snap.rows[rows[i]];
    nodes[i] = {snap.ids[rows[i]], store::kNone, r.start, r.end,
                colors.key_for(snap.categories[r.category], snap.actions[r.action])};
    if (r.parent != store::kNone) {
      auto it = position.find(r.parent);
      if (it != position.end()) nodes[i].parent = it->second;
    }
  }
  return layout_nodes(nodes, viewport, options);
}

struct TaskViewLayout {
  std::optional<LayoutBar> parent;  // top region
  LayoutBar current;                // middle region
  std::vector<LayoutBar> children;  // bottom region, up-floating rows
  std::uint32_t child_rows = 0;
};

inline LayoutBar whole_region_bar(const Task& t, Viewport v, const ColorKeyMap& colors) {
  LayoutBar bar;
  bar.task_id = t.id;
  bar.x0 = std::max(t.start, v.t0);
  bar.x1 = std::max(bar.x0, std::min(t.end, v.t1));
  bar.y = 0.0;
  bar.h = 1.0;
  bar.color_key = colors.key_for(t.category, t.action);
  return bar;
}

// Three stacked regions sharing one time axis: parent, current, subtasks.
inline TaskViewLayout layout_task_view(const Task& current, const std::optional<Task>& parent,
                                       std::span<const Task> children, Viewport viewport,
                                       const ColorKeyMap& colors) {
  if (!(viewport.t0 < viewport.t1)) throw Error(ErrorCode::kBadRange, "viewport needs t0 < t1");
  TaskViewLayout out;
  if (parent) out.parent = whole_region_bar(*parent, viewport, colors);
  out.current = whole_region_bar(current, viewport, colors);

  std::vector<RowItem> items;
  items.reserve(children.size());
  for (const Task& c : children) items.push_back({c.id, c.start, c.end});
  const auto rows = assign_rows(std::span<const RowItem>(items));
  for (std::uint32_t r : rows) out.child_rows = std::max(out.child_rows, r + 1);
  for (std::size_t i = 0; i < children.size(); ++i) {
    const Task& c = children[i];
    if (!overlaps(c.start, c.end, viewport.t0, viewport.t1)) continue;
    LayoutBar bar;
    bar.task_id = c.id;
    bar.level = 1;
    bar.row = rows[i];
    bar.x0 = std::max(c.start, viewport.t0);
    bar.x1 = std::min(c.end, viewport.t1);
    bar.h = 1.0 / out.child_rows;
    bar.y = rows[i] * bar.h;
    bar.color_key = colors.key_for(c.category, c.action);
    out.children.push_back(std::move(bar));
  }
  return out;
}

}  // namespace daisen

#endif  // DAISEN_LAYOUT_ENGINE_HPP
