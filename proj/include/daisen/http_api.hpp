#ifndef DAISEN_HTTP_API_HPP
#define DAISEN_HTTP_API_HPP

// JSON query API over a TraceStore. Api::handle is a pure function of the
// published snapshot and the request; Server binds it to HTTP.

#include <httplib.h>

#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "daisen/error.hpp"
#include "daisen/jsonl.hpp"
#include "daisen/layout_engine.hpp"
#include "daisen/metrics_engine.hpp"
#include "daisen/svg_render.hpp"
#include "daisen/trace_store.hpp"

namespace daisen::api {

using Json = nlohmann::ordered_json;
using Params = std::multimap<std::string, std::string>;

inline constexpr std::string_view kDefaultBind = "127.0.0.1:3001";
inline constexpr std::size_t kDefaultBins = 100;
inline constexpr std::size_t kMaxBins = 100000;

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

// ---------------------------------------------------------------------------
// JSON shapes
// ---------------------------------------------------------------------------

inline Json to_json(const TraceMeta& m) {
  Json j;
  j["task_count"] = m.task_count;
  j["time_min"] = m.time_min;
  j["time_max"] = m.time_max;
  j["component_count"] = m.component_count;
  j["format_version"] = m.format_version;
  return j;
}

inline Json to_json(const ComponentInfo& c) {
  Json j;
  j["name"] = c.name;
  j["task_count"] = c.task_count;
  j["first_start"] = c.first_start;
  j["last_end"] = c.last_end;
  return j;
}

inline Json to_json(const Task& t) { return Json::parse(jsonl::encode(t)); }

inline Json to_json(const MetricSeries& s) {
  Json j;
  j["component"] = s.component;
  j["metric"] = metric_name(s.metric);
  j["start"] = s.t0;
  j["end"] = s.t1;
  j["bins"] = s.bins;
  j["bin_width"] = s.bin_width();
  Json values = Json::array();
  for (double v : s.values) values.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
  j["values"] = std::move(values);
  return j;
}

inline Json to_json(const LayoutBar& b) {
  Json j;
  j["task_id"] = b.task_id;
  j["level"] = b.level;
  j["row"] = b.row;
  j["x0"] = b.x0;
  j["x1"] = b.x1;
  j["y"] = b.y;
  j["h"] = b.h;
  j["color_key"] = b.color_key;
  return j;
}

inline Json to_json(const ColorKeyMap& m) {
  Json j;
  j["mode"] = m.mode == ColorMode::kCategoryAction ? "category-action" : "category";
  j["keys"] = m.keys;
  Json colors = Json::array();
  for (const Rgb& c : m.palette) colors.push_back(c.hex());
  j["colors"] = std::move(colors);
  return j;
}

inline Json error_json(const Error& e) {
  Json j;
  j["code"] = code_name(e.code());
  j["message"] = e.message();
  return j;
}

// ---------------------------------------------------------------------------
// Query parameters
// ---------------------------------------------------------------------------

class Query {
 public:
  explicit Query(const Params& params) : params_(params) {}

  std::optional<std::string> text(const std::string& key) const {
    auto it = params_.find(key);
    if (it == params_.end()) return std::nullopt;
    return it->second;
  }

  std::string required(const std::string& key) const {
    auto v = text(key);
    if (!v || v->empty()) throw Error(ErrorCode::kBadParam, "missing parameter '" + key + "'");
    return *v;
  }

  std::optional<double> number(const std::string& key) const {
    auto v = text(key);
    if (!v || v->empty()) return std::nullopt;
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size() || !std::isfinite(out))
      throw Error(ErrorCode::kBadParam, "parameter '" + key + "' is not a number");
    return out;
  }

  std::optional<std::size_t> count(const std::string& key) const {
    auto v = number(key);
    if (!v) return std::nullopt;
    if (*v < 0 || *v != std::floor(*v) || *v > 1e12)
      throw Error(ErrorCode::kBadParam, "parameter '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(*v);
  }

  std::optional<MetricKind> metric(const std::string& key) const {
    auto v = text(key);
    if (!v || v->empty()) return std::nullopt;
    auto m = parse_metric(*v);
    if (!m) throw Error(ErrorCode::kBadParam, "unknown metric '" + *v + "'");
    return m;
  }

 private:
  const Params& params_;
};

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

class Api {
 public:
  explicit Api(const TraceStore& store, Expectations expectations = {})
      : store_(store), expectations_(std::move(expectations)) {}

  Response handle(std::string_view path, const Params& params) const {
    Response res;
    const Query q(params);
    try {
      Json body = route(path, q, res);
      if (res.content_type == "application/json") res.body = body.dump();
    } catch (const Error& e) {
      res = Response{};
      res.status = http_status(e.code());
      res.body = error_json(e).dump();
    } catch (const std::exception& e) {
      res = Response{};
      res.status = 500;
      res.body = error_json(Error(ErrorCode::kIo, e.what())).dump();
    }
    if (auto gen = q.text("gen")) res.headers["X-Daisen-Gen"] = *gen;
    return res;
  }

  // Fills a ViewSpec from render.svg query parameters.
  static ViewSpec view_spec(const Query& q, const TraceMeta& meta) {
    ViewSpec spec;
    if (auto k = q.text("kind")) {
      auto kind = parse_view_kind(*k);
      if (!kind) throw Error(ErrorCode::kBadParam, "unknown view kind '" + *k + "'");
      spec.kind = *kind;
    } else if (q.text("task_id")) {
      spec.kind = ViewKind::kTask;
    } else if (q.text("component")) {
      spec.kind = ViewKind::kComponent;
    }
    spec.component = q.text("component");
    spec.task_id = q.text("task_id");
    spec.t0 = q.number("t0").value_or(meta.time_min);
    spec.t1 = q.number("t1").value_or(meta.time_max);
    spec.metric_primary = q.metric("metric_primary");
    spec.metric_secondary = q.metric("metric_secondary");
    spec.bins = q.count("bins").value_or(kDefaultBins);
    if (spec.bins > kMaxBins) throw Error(ErrorCode::kBadParam, "too many bins");
    spec.width_px = static_cast<int>(std::min<std::size_t>(q.count("width_px").value_or(960), 1u << 20));
    spec.height_px = static_cast<int>(std::min<std::size_t>(q.count("height_px").value_or(480), 1u << 20));
    spec.filter = q.text("filter");
    spec.page = q.count("page").value_or(0);
    spec.page_size = q.count("page_size").value_or(16);
    return spec;
  }

 private:
  Json route(std::string_view path, const Query& q, Response& res) const {
    if (path == "/api/meta") return with_gen(to_json(store_.meta()), q);
    if (path == "/api/components") return components(q);
    if (path == "/api/metrics") return metrics(q);
    if (path == "/api/tasks-layout") return tasks_layout(q);
    if (path == "/api/render.svg") {
      res.content_type = "image/svg+xml";
      res.body = render_svg(store_, view_spec(q, store_.meta()), &expectations_);
      return {};
    }
    static const std::string kTask = "/api/task/";
    if (path.substr(0, kTask.size()) == kTask) return task(path.substr(kTask.size()));
    throw Error(ErrorCode::kUnknownId, "no endpoint at '" + std::string(path) + "'");
  }

  static Json with_gen(Json body, const Query& q) {
    if (auto gen = q.text("gen")) body["gen"] = *gen;
    return body;
  }

  Json components(const Query& q) const {
    const auto page = store_.list_components(q.text("filter").value_or(""), q.count("page").value_or(0),
                                             q.count("page_size").value_or(16));
    Json j;
    j["total"] = page.total;
    Json items = Json::array();
    for (const auto& c : page.items) items.push_back(to_json(c));
    j["items"] = std::move(items);
    return with_gen(std::move(j), q);
  }

  // Resolves the component and window shared by metrics and layout.
  std::pair<std::shared_ptr<const store::Snapshot>, std::string> component_scope(const Query& q) const {
    auto snap = store_.snapshot();
    std::string component = q.required("component");
    if (!snap->find_location(component))
      throw Error(ErrorCode::kUnknownId, "unknown component '" + component + "'");
    return {std::move(snap), std::move(component)};
  }

  static std::pair<double, double> window(const Query& q, const TraceMeta& meta) {
    const double t0 = q.number("start").value_or(meta.time_min);
    const double t1 = q.number("end").value_or(meta.time_max);
    if (!(t0 < t1)) throw Error(ErrorCode::kBadRange, "window must satisfy start < end");
    return {t0, t1};
  }

  Json metrics(const Query& q) const {
    auto [snap, component] = component_scope(q);
    const auto [t0, t1] = window(q, snap->meta);
    const std::size_t bins = q.count("bins").value_or(kDefaultBins);
    if (bins < 1 || bins > kMaxBins) throw Error(ErrorCode::kBadParam, "bins must be in [1, 100000]");
    const MetricKind m1 = q.metric("metric").value_or(MetricKind::kConcurrentTasks);
    Json series = Json::array();
    series.push_back(to_json(compute_series(*snap, component, m1, t0, t1, bins)));
    if (auto m2 = q.metric("metric2")) series.push_back(to_json(compute_series(*snap, component, *m2, t0, t1, bins)));
    Json j;
    j["series"] = std::move(series);
    if (auto ref = expectations_.anticipated(component, m1)) j["anticipated"] = *ref;
    return with_gen(std::move(j), q);
  }

  Json tasks_layout(const Query& q) const {
    auto [snap, component] = component_scope(q);
    const auto [t0, t1] = window(q, snap->meta);
    LayoutOptions opt;
    opt.min_px = q.number("min_px").value_or(1.0);
    opt.px_per_second = q.number("px_per_s").value_or(1000.0 / (t1 - t0));
    if (opt.min_px < 0 || !(opt.px_per_second > 0))
      throw Error(ErrorCode::kBadParam, "min_px must be >= 0 and px_per_s > 0");
    const ColorKeyMap colors = build_color_key(*snap);
    const ComponentLayout layout = layout_component(*snap, component, {t0, t1}, opt, colors);
    Json bars = Json::array();
    for (const LayoutBar& b : layout.bars) bars.push_back(to_json(b));
    Json j;
    j["bars"] = std::move(bars);
    j["color_key"] = to_json(colors);
    j["total"] = layout.total;
    j["culled"] = layout.culled;
    j["level_heights"] = layout.level_heights;
    return with_gen(std::move(j), q);
  }

  Json task(std::string_view rest) const {
    auto slash = rest.find('/');
    const std::string id(rest.substr(0, slash));
    const std::string_view tail = slash == std::string_view::npos ? "" : rest.substr(slash);
    if (id.empty()) throw Error(ErrorCode::kBadParam, "missing task id");
    if (tail.empty()) return to_json(store_.get_task(id));
    Json list = Json::array();
    if (tail == "/children") {
      for (const Task& t : store_.children(id)) list.push_back(to_json(t));
    } else if (tail == "/parents") {
      for (const Task& t : store_.parent_chain(id)) list.push_back(to_json(t));
    } else {
      throw Error(ErrorCode::kUnknownId, "no endpoint at '/api/task/" + std::string(rest) + "'");
    }
    return list;
  }

  const TraceStore& store_;
  Expectations expectations_;
};

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------

struct BindAddress {
  std::string host;
  int port = 0;
};

inline BindAddress parse_bind(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0)
    throw Error(ErrorCode::kBind, "bind address must be host:port, got '" + std::string(text) + "'");
  BindAddress out;
  out.host = std::string(text.substr(0, colon));
  const std::string_view port = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), out.port);
  if (ec != std::errc() || ptr != port.data() + port.size() || out.port < 0 || out.port > 65535)
    throw Error(ErrorCode::kBind, "bad port in bind address '" + std::string(text) + "'");
  return out;
}

// DAISEN_BIND if set, else the default address.
inline BindAddress bind_from_environment() {
  const char* env = std::getenv("DAISEN_BIND");
  return parse_bind(env && *env ? env : kDefaultBind);
}

inline constexpr std::string_view kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>daisen</title></head>
<body>
<h1>daisen trace server</h1>
<ul>
<li><a href="/api/meta">/api/meta</a></li>
<li><a href="/api/components">/api/components</a></li>
<li>/api/metrics?component=&amp;metric=&amp;metric2=&amp;start=&amp;end=&amp;bins=</li>
<li>/api/tasks-layout?component=&amp;start=&amp;end=&amp;min_px=&amp;px_per_s=</li>
<li>/api/task/{id}, /api/task/{id}/children, /api/task/{id}/parents</li>
<li><a href="/api/render.svg">/api/render.svg</a></li>
</ul>
</body></html>
)";

class Server {
 public:
  Server(const TraceStore& store, Expectations expectations = {}, std::optional<std::string> static_dir = {})
      : api_(store, std::move(expectations)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      Params params(req.params.begin(), req.params.end());
      Response out = api_.handle(req.path, params);
      res.status = out.status;
      for (const auto& [k, v] : out.headers) res.set_header(k, v);
      res.set_content(out.body, out.content_type);
    };
    http_.Get(R"(/api/.*)", handler);
    if (static_dir && std::filesystem::is_directory(*static_dir)) {
      http_.set_mount_point("/", *static_dir);
    } else {
      http_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(std::string(kIndexPage), "text/html");
      });
    }
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  int start(const BindAddress& bind) {
    if (bind.port == 0) {
      port_ = http_.bind_to_any_port(bind.host);
      if (port_ < 0) throw Error(ErrorCode::kBind, "cannot bind to " + bind.host);
    } else {
      if (!http_.bind_to_port(bind.host, bind.port))
        throw Error(ErrorCode::kBind, "cannot bind to " + bind.host + ":" + std::to_string(bind.port));
      port_ = bind.port;
    }
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    return port_;
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    if (thread_.joinable()) {
      http_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  const Api& api() const { return api_; }

 private:
  Api api_;
  httplib::Server http_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace daisen::api

#endif  // DAISEN_HTTP_API_HPP
