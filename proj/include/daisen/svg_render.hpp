#ifndef DAISEN_SVG_RENDER_HPP
#define DAISEN_SVG_RENDER_HPP

// Server-side SVG export of the three views. Output depends only on the store
// contents and the ViewSpec: elements are emitted in a fixed order and every
// coordinate is printed with exactly three fractional digits.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "daisen/error.hpp"
#include "daisen/layout_engine.hpp"
#include "daisen/metrics_engine.hpp"
#include "daisen/trace_store.hpp"

namespace daisen {

enum class ViewKind { kOverview, kComponent, kTask };

inline std::string_view view_kind_name(ViewKind k) {
  switch (k) {
    case ViewKind::kOverview: return "overview";
    case ViewKind::kComponent: return "component";
    case ViewKind::kTask: return "task";
  }
  return "";
}

inline std::optional<ViewKind> parse_view_kind(std::string_view s) {
  for (ViewKind k : {ViewKind::kOverview, ViewKind::kComponent, ViewKind::kTask})
    if (view_kind_name(k) == s) return k;
  return std::nullopt;
}

struct ViewSpec {
  ViewKind kind = ViewKind::kOverview;
  std::optional<std::string> component;
  std::optional<TaskId> task_id;
  double t0 = 0.0;
  double t1 = 1.0;
  std::optional<MetricKind> metric_primary;
  std::optional<MetricKind> metric_secondary;
  std::size_t bins = 100;
  int width_px = 960;
  int height_px = 480;
  std::optional<std::string> filter;
  std::size_t page = 0;
  std::size_t page_size = 16;

  void validate() const {
    if (kind == ViewKind::kComponent && !component)
      throw Error(ErrorCode::kBadParam, "component view needs a component");
    if (kind == ViewKind::kTask && !task_id) throw Error(ErrorCode::kBadParam, "task view needs a task id");
    if (!std::isfinite(t0) || !std::isfinite(t1) || !(t0 < t1))
      throw Error(ErrorCode::kBadRange, "view window must satisfy t0 < t1");
    if (bins < 1) throw Error(ErrorCode::kBadParam, "bins must be at least 1");
    if (width_px < 200 || height_px < 100 || width_px > 20000 || height_px > 20000)
      throw Error(ErrorCode::kBadParam, "image size must be between 200x100 and 20000x20000");
    if (page_size < 1) throw Error(ErrorCode::kBadParam, "page_size must be at least 1");
  }
};

namespace svg_detail {

// Fixed three-decimal output with negative zero folded to zero.
inline std::string num(double v) {
  double r = std::round(v * 1000.0) / 1000.0;
  if (r == 0.0) r = 0.0;
  return fmt::format("{:.3f}", r);
}

// Shortest round-trip form, for data attributes.
inline std::string exact(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

inline std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// Tick positions on a 1-2-5 grid, roughly `target` of them inside [a, b].
inline std::vector<double> nice_ticks(double a, double b, int target = 6) {
  const double raw = (b - a) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  const double first = std::ceil(a / step);
  for (double k = first; k * step <= b + step * 1e-9; k += 1.0) ticks.push_back(k * step);
  return ticks;
}

struct TimeUnit {
  double scale;
  const char* suffix;
};

inline TimeUnit time_unit(double span) {
  if (span >= 1.0) return {1.0, "s"};
  if (span >= 1e-3) return {1e3, "ms"};
  if (span >= 1e-6) return {1e6, "us"};
  return {1e9, "ns"};
}

inline std::string time_label(double t, TimeUnit u) {
  double v = t * u.scale;
  if (std::abs(v) < 1e-9) v = 0.0;
  return fmt::format("{:.6g}{}", v, u.suffix);
}

inline std::string value_label(double v) { return fmt::format("{:.3g}", v); }

class Doc {
 public:
  Doc(int width, int height) {
    out_ += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        width, height, width, height);
    out_ += fmt::format("<rect class=\"background\" x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
                        width, height);
  }

  void raw(std::string_view s) { out_ += s; }

  void rect(std::string_view cls, double x, double y, double w, double h, std::string_view fill,
            std::string_view extra = {}) {
    out_ += fmt::format("<rect class=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"{}/>\n", cls,
                        num(x), num(y), num(std::max(w, 0.0)), num(std::max(h, 0.0)), fill, extra);
  }

  void line(std::string_view cls, double x0, double y0, double x1, double y1, std::string_view stroke,
            std::string_view extra = {}) {
    out_ += fmt::format("<line class=\"{}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\"{}/>\n", cls,
                        num(x0), num(y0), num(x1), num(y1), stroke, extra);
  }

  void text(std::string_view cls, double x, double y, std::string_view body, std::string_view anchor = "start",
            std::string_view extra = {}) {
    out_ += fmt::format("<text class=\"{}\" x=\"{}\" y=\"{}\" text-anchor=\"{}\"{}>{}</text>\n", cls, num(x),
                        num(y), anchor, extra, escape(body));
  }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  std::string out_;
};

struct Frame {
  double x, y, w, h;
};

inline double x_of(const Frame& f, const ViewSpec& spec, double t) {
  return f.x + (t - spec.t0) / (spec.t1 - spec.t0) * f.w;
}

inline void time_axis(Doc& doc, const Frame& f, const ViewSpec& spec) {
  const double base = f.y + f.h;
  doc.line("axis", f.x, base, f.x + f.w, base, "#333333");
  const TimeUnit unit = time_unit(spec.t1 - spec.t0);
  for (double t : nice_ticks(spec.t0, spec.t1)) {
    const double x = x_of(f, spec, t);
    doc.line("tick", x, base, x, base + 4.0, "#333333");
    doc.text("tick-label", x, base + 15.0, time_label(t, unit), "middle");
  }
}

inline void legend(Doc& doc, double x, double y, const ColorKeyMap& colors, const std::set<std::string>& used) {
  doc.raw("<g class=\"legend\">\n");
  doc.text("legend-title", x, y, "Legend");
  double row = y + 8.0;
  for (const std::string& key : colors.keys) {
    if (!used.count(key)) continue;
    doc.rect("legend-swatch", x, row, 12.0, 12.0, colors.color_of(key).hex(),
             " data-key=\"" + escape(key) + "\"");
    doc.text("legend-key", x + 18.0, row + 10.0, key);
    row += 18.0;
  }
  doc.raw("</g>\n");
}

inline std::string bar_attrs(const LayoutBar& bar) {
  return " stroke=\"#ffffff\" stroke-width=\"0.5\" data-task-id=\"" + escape(bar.task_id) + "\" data-key=\"" +
         escape(bar.color_key) + "\"";
}

inline void draw_bar(Doc& doc, const Frame& f, const ViewSpec& spec, const LayoutBar& bar,
                     const ColorKeyMap& colors) {
  const double x0 = x_of(f, spec, bar.x0), x1 = x_of(f, spec, bar.x1);
  doc.rect("task", x0, f.y + bar.y * f.h, x1 - x0, bar.h * f.h, colors.color_of(bar.color_key).hex(),
           bar_attrs(bar));
}

constexpr double kLeft = 70.0, kRight = 200.0, kTop = 28.0, kBottom = 36.0;

inline std::string render_component(const TraceStore& store, const ViewSpec& spec) {
  auto snap = store.snapshot();
  if (!snap->find_location(*spec.component))
    throw Error(ErrorCode::kUnknownId, "unknown component '" + *spec.component + "'");
  const Frame f{kLeft, kTop, spec.width_px - kLeft - kRight, spec.height_px - kTop - kBottom};
  const ColorKeyMap colors = build_color_key(*snap);
  LayoutOptions opt;
  opt.px_per_second = f.w / (spec.t1 - spec.t0);
  const ComponentLayout layout = layout_component(*snap, *spec.component, {spec.t0, spec.t1}, opt, colors);

  Doc doc(spec.width_px, spec.height_px);
  doc.raw(fmt::format("<g class=\"view\" data-kind=\"component\" data-component=\"{}\" data-bars=\"{}\" "
                      "data-culled=\"{}\">\n",
                      escape(*spec.component), layout.bars.size(), layout.culled));
  doc.text("watermark", f.x + 4.0, f.y + 16.0, *spec.component, "start",
           " font-size=\"16\" fill=\"#000000\" fill-opacity=\"0.25\"");
  doc.rect("plot", f.x, f.y, f.w, f.h, "none", " stroke=\"#cccccc\"");
  std::set<std::string> used;
  doc.raw("<g class=\"bars\">\n");
  for (const LayoutBar& bar : layout.bars) {
    draw_bar(doc, f, spec, bar, colors);
    used.insert(bar.color_key);
  }
  doc.raw("</g>\n");
  time_axis(doc, f, spec);
  legend(doc, f.x + f.w + 16.0, f.y + 10.0, colors, used);
  doc.raw("</g>\n");
  return doc.finish();
}

inline std::string render_task(const TraceStore& store, const ViewSpec& spec) {
  const Task current = store.get_task(*spec.task_id);
  const auto chain = store.parent_chain(*spec.task_id);
  std::optional<Task> parent;
  if (chain.size() > 1) parent = chain[1];
  const auto children = store.children(*spec.task_id);
  const ColorKeyMap colors = build_color_key(*store.snapshot());
  const TaskViewLayout layout = layout_task_view(current, parent, children, {spec.t0, spec.t1}, colors);

  const double w = spec.width_px - kLeft - kRight;
  const double h = spec.height_px - kTop - kBottom;
  const Frame top{kLeft, kTop, w, h * 0.2 - 6.0};
  const Frame mid{kLeft, kTop + h * 0.2, w, h * 0.2 - 6.0};
  const Frame bottom{kLeft, kTop + h * 0.4, w, h * 0.6};

  Doc doc(spec.width_px, spec.height_px);
  doc.raw(fmt::format("<g class=\"view\" data-kind=\"task\" data-task-id=\"{}\" data-children=\"{}\">\n",
                      escape(current.id), layout.children.size()));
  doc.text("watermark", kLeft + 4.0, kTop - 8.0, current.location, "start",
           " font-size=\"16\" fill=\"#000000\" fill-opacity=\"0.25\"");
  std::set<std::string> used;
  auto region = [&](std::string_view name, const Frame& fr) {
    doc.rect("region", fr.x, fr.y, fr.w, fr.h, "none", " stroke=\"#cccccc\"");
    doc.text("region-label", fr.x - 6.0, fr.y + 12.0, name, "end");
  };
  region("Parent", top);
  if (layout.parent) {
    draw_bar(doc, top, spec, *layout.parent, colors);
    used.insert(layout.parent->color_key);
  }
  region("Current", mid);
  draw_bar(doc, mid, spec, layout.current, colors);
  used.insert(layout.current.color_key);
  region("Subtasks", bottom);
  doc.raw("<g class=\"bars\">\n");
  for (const LayoutBar& bar : layout.children) {
    draw_bar(doc, bottom, spec, bar, colors);
    used.insert(bar.color_key);
  }
  doc.raw("</g>\n");
  time_axis(doc, bottom, spec);
  legend(doc, kLeft + w + 16.0, kTop + 10.0, colors, used);
  doc.raw("</g>\n");
  return doc.finish();
}

inline double finite_max(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v)
    if (std::isfinite(x)) m = std::max(m, x);
  return m;
}

inline double finite_mean(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

inline std::string values_attr(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += exact(v[i]);
  }
  return s;
}

// Polyline through bin centres; NaN bins break the line.
inline std::string series_path(const MetricSeries& s, const Frame& f, double top) {
  std::string d;
  bool pen = false;
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    const double v = s.values[k];
    if (!std::isfinite(v)) {
      pen = false;
      continue;
    }
    const double x = f.x + (static_cast<double>(k) + 0.5) / static_cast<double>(s.bins) * f.w;
    const double y = f.y + f.h - v / top * f.h;
    d += pen ? " L" : (d.empty() ? "M" : " M");
    d += num(x) + " " + num(y);
    pen = true;
  }
  return d;
}

inline std::string render_overview(const TraceStore& store, const ViewSpec& spec, const Expectations* expect) {
  const MetricKind primary = spec.metric_primary.value_or(MetricKind::kConcurrentTasks);
  const auto page = store.list_components(spec.filter.value_or(""), spec.page, spec.page_size);
  auto snap = store.snapshot();

  Doc doc(spec.width_px, spec.height_px);
  doc.raw(fmt::format("<g class=\"view\" data-kind=\"overview\" data-metric=\"{}\" data-total=\"{}\" "
                      "data-page=\"{}\">\n",
                      metric_name(primary), page.total, spec.page));
  const std::size_t n = page.items.size();
  const std::size_t cols = std::clamp<std::size_t>(n, 1, 4);
  const std::size_t rows = std::max<std::size_t>(1, (n + cols - 1) / cols);
  const double cell_w = (spec.width_px - 20.0) / static_cast<double>(cols);
  const double cell_h = (spec.height_px - 20.0) / static_cast<double>(rows);

  for (std::size_t i = 0; i < n; ++i) {
    const std::string& name = page.items[i].name;
    const double cx = 10.0 + static_cast<double>(i % cols) * cell_w;
    const double cy = 10.0 + static_cast<double>(i / cols) * cell_h;
    const Frame f{cx + 44.0, cy + 20.0, cell_w - 88.0, cell_h - 44.0};

    const MetricSeries s1 = compute_series(*snap, name, primary, spec.t0, spec.t1, spec.bins);
    std::optional<MetricSeries> s2;
    if (spec.metric_secondary)
      s2 = compute_series(*snap, name, *spec.metric_secondary, spec.t0, spec.t1, spec.bins);
    std::optional<double> reference;
    if (expect) reference = expect->anticipated(name, primary);

    double top = std::max(finite_max(s1.values), reference.value_or(0.0)) * 1.1;
    if (!(top > 0.0)) top = 1.0;

    std::string attrs = fmt::format(
        "<g class=\"chart\" data-component=\"{}\" data-metric=\"{}\" data-mean=\"{}\" data-y-max=\"{}\" "
        "data-values=\"{}\"",
        escape(name), metric_name(primary), exact(finite_mean(s1.values)), exact(top), values_attr(s1.values));
    if (reference) attrs += fmt::format(" data-reference=\"{}\"", exact(*reference));
    double top2 = 1.0;
    if (s2) {
      top2 = finite_max(s2->values) * 1.1;
      if (!(top2 > 0.0)) top2 = 1.0;
      attrs += fmt::format(" data-metric2=\"{}\" data-mean2=\"{}\" data-y2-max=\"{}\" data-values2=\"{}\"",
                           metric_name(*spec.metric_secondary), exact(finite_mean(s2->values)), exact(top2),
                           values_attr(s2->values));
    }
    doc.raw(attrs + ">\n");
    doc.rect("frame", f.x, f.y, f.w, f.h, "none", " stroke=\"#cccccc\"");
    doc.text("chart-title", cx + 4.0, cy + 12.0, name);
    doc.line("axis", f.x, f.y, f.x, f.y + f.h, "#1f77b4");
    doc.text("y-label", f.x - 4.0, f.y + 4.0, value_label(top), "end", " fill=\"#1f77b4\"");
    doc.text("y-label", f.x - 4.0, f.y + f.h, "0", "end", " fill=\"#1f77b4\"");
    if (reference) {
      const double y = f.y + f.h - *reference / top * f.h;
      doc.line("reference", f.x, y, f.x + f.w, y, "#d62728", " stroke-dasharray=\"4 3\"");
    }
    doc.raw(fmt::format("<path class=\"series primary\" d=\"{}\" fill=\"none\" stroke=\"#1f77b4\"/>\n",
                        series_path(s1, f, top)));
    if (s2) {
      doc.line("axis secondary", f.x + f.w, f.y, f.x + f.w, f.y + f.h, "#ff7f0e");
      doc.text("y2-label", f.x + f.w + 4.0, f.y + 4.0, value_label(top2), "start", " fill=\"#ff7f0e\"");
      doc.text("y2-label", f.x + f.w + 4.0, f.y + f.h, "0", "start", " fill=\"#ff7f0e\"");
      doc.raw(fmt::format(
          "<path class=\"series secondary\" d=\"{}\" fill=\"none\" stroke=\"#ff7f0e\" stroke-dasharray=\"3 2\"/>\n",
          series_path(*s2, f, top2)));
    }
    const TimeUnit unit = time_unit(spec.t1 - spec.t0);
    doc.line("axis", f.x, f.y + f.h, f.x + f.w, f.y + f.h, "#333333");
    doc.text("tick-label", f.x, f.y + f.h + 12.0, time_label(spec.t0, unit), "start");
    doc.text("tick-label", f.x + f.w, f.y + f.h + 12.0, time_label(spec.t1, unit), "end");
    doc.raw("</g>\n");
  }
  doc.raw("</g>\n");
  return doc.finish();
}

}  // namespace svg_detail

inline std::string render_svg(const TraceStore& store, const ViewSpec& spec,
                              const Expectations* expectations = nullptr) {
  spec.validate();
  switch (spec.kind) {
    case ViewKind::kComponent: return svg_detail::render_component(store, spec);
    case ViewKind::kTask: return svg_detail::render_task(store, spec);
    case ViewKind::kOverview: break;
  }
  return svg_detail::render_overview(store, spec, expectations);
}

}  // namespace daisen

#endif  // DAISEN_SVG_RENDER_HPP
