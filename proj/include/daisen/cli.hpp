#ifndef DAISEN_CLI_HPP
#define DAISEN_CLI_HPP

// `daisen` command line: ingest | gen | serve | render | validate | stats.
// Exit status: 0 ok, 1 usage, 2 invalid input, 3 I/O.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "daisen/collector.hpp"
#include "daisen/error.hpp"
#include "daisen/http_api.hpp"
#include "daisen/jsonl.hpp"
#include "daisen/metrics_engine.hpp"
#include "daisen/simkit.hpp"
#include "daisen/svg_render.hpp"
#include "daisen/trace_store.hpp"

namespace daisen::cli {

enum Exit : int { kOk = 0, kUsage = 1, kInvalid = 2, kIoFailure = 3 };

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kBind: return kIoFailure;
    case ErrorCode::kValidation:
    case ErrorCode::kParse:
    case ErrorCode::kConfig:
    case ErrorCode::kTimeOrder:
    case ErrorCode::kSameLocation:
    case ErrorCode::kChildOpen:
    case ErrorCode::kCycle: return kInvalid;
    default: return kUsage;
  }
}

// "run.dtrace" and "run" both name the store with base path "run".
inline std::string store_base(const std::string& path) {
  const std::string ext = ".dtrace";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
    return path.substr(0, path.size() - ext.size());
  return path;
}

inline std::string default_store() {
  const char* env = std::getenv("DAISEN_STORE");
  return env && *env ? env : "run.dtrace";
}

// Opens an existing store; a missing log is an I/O error rather than an
// empty trace.
inline std::unique_ptr<TraceStore> open_store(const std::string& path) {
  const std::string base = store_base(path);
  if (!std::filesystem::exists(base + ".dtrace"))
    throw Error(ErrorCode::kIo, "no store at '" + base + ".dtrace'");
  return std::make_unique<TraceStore>(std::filesystem::path(base));
}

inline void print_findings(std::ostream& out, const ValidationReport& report) {
  for (const Finding& f : report.errors) out << "error " << f.task_id << " " << f.code << " " << f.message << "\n";
  for (const Finding& f : report.warnings)
    out << "warning " << f.task_id << " " << f.code << " " << f.message << "\n";
}

inline std::string seconds(double v) { return fmt::format("{:.9g}", v); }

struct Options {
  // ingest / validate
  std::string input;
  std::string output = "run.dtrace";
  bool lenient = false;
  // gen
  std::string sim_config;
  std::string preset = "dispatch-bound";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> dispatch_rate;
  std::string jsonl_out;
  // store users
  std::string store;
  std::string bind;
  std::string expectations;
  std::string static_dir;
  // render
  std::string kind;
  std::string component;
  std::string task_id;
  std::optional<double> from, to;
  std::string metric, metric2;
  std::size_t bins = 100;
  int width = 960, height = 480;
  std::string filter;
  std::size_t page = 0, page_size = 16;
  std::string out_path;
  bool json = false;
};

inline int cmd_ingest(const Options& o, std::ostream& out) {
  TraceStore store(std::filesystem::path(store_base(o.output)));
  ValidationReport report;
  std::vector<std::string> warnings;
  try {
    store.ingest_file(o.input, o.lenient ? ValidationMode::kLenient : ValidationMode::kStrict, &report, &warnings);
  } catch (const Error& e) {
    print_findings(out, report);
    throw;
  }
  for (const auto& w : warnings) out << "warning " << w << "\n";
  print_findings(out, report);
  const TraceMeta meta = store.meta();
  out << "ingested " << meta.task_count << " tasks, " << meta.component_count << " components into "
      << store.log_path() << "\n";
  return kOk;
}

inline int cmd_gen(const Options& o, std::ostream& out) {
  sim::SimConfig cfg;
  if (o.preset == "compute-bound")
    cfg = sim::compute_bound_config();
  else if (o.preset != "dispatch-bound")
    throw Error(ErrorCode::kConfig, "unknown preset '" + o.preset + "'");
  if (!o.sim_config.empty()) cfg = sim::parse_config(config::parse_file(o.sim_config), cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (o.dispatch_rate) cfg.dispatch_rate = *o.dispatch_rate;
  cfg.validate();

  auto sink = std::make_shared<MemorySink>();
  CollectorOptions copts;
  copts.seed = cfg.seed;
  CollectorSession session(sink, copts);
  sim::SimResult result = sim::simulate(cfg, session);
  session.close();
  const std::vector<Task> records = sink->records();
  if (!o.jsonl_out.empty()) jsonl::write_file(o.jsonl_out, records);

  TraceStore store(std::filesystem::path(store_base(o.output)));
  store.ingest(records, ValidationMode::kStrict);
  result.sink = store.log_path();
  out << "total_time=" << seconds(result.total_time) << " cycles=" << result.total_cycles
      << " tasks=" << result.tasks_emitted << " dispatch_rate=" << cfg.dispatch_rate << " store=" << result.sink
      << "\n";
  return kOk;
}

inline int cmd_serve(const Options& o, std::ostream& out) {
  auto store = open_store(o.store);
  Expectations expect;
  if (!o.expectations.empty()) expect = Expectations::load(o.expectations);
  const api::BindAddress bind = o.bind.empty() ? api::bind_from_environment() : api::parse_bind(o.bind);
  api::Server server(*store, std::move(expect),
                     o.static_dir.empty() ? std::nullopt : std::optional<std::string>(o.static_dir));
  const int port = server.start(bind);
  out << "serving " << store->log_path() << " on http://" << bind.host << ":" << port << "/" << std::endl;
  server.wait();
  return kOk;
}

inline int cmd_render(const Options& o, std::ostream& out) {
  auto store = open_store(o.store);
  const TraceMeta meta = store->meta();
  ViewSpec spec;
  if (!o.kind.empty()) {
    auto k = parse_view_kind(o.kind);
    if (!k) throw Error(ErrorCode::kBadParam, "unknown view kind '" + o.kind + "'");
    spec.kind = *k;
  } else if (!o.task_id.empty()) {
    spec.kind = ViewKind::kTask;
  } else if (!o.component.empty()) {
    spec.kind = ViewKind::kComponent;
  }
  if (!o.component.empty()) spec.component = o.component;
  if (!o.task_id.empty()) spec.task_id = o.task_id;
  spec.t0 = o.from.value_or(meta.time_min);
  spec.t1 = o.to.value_or(meta.time_max);
  auto metric = [](const std::string& name) -> std::optional<MetricKind> {
    if (name.empty()) return std::nullopt;
    auto m = parse_metric(name);
    if (!m) throw Error(ErrorCode::kBadParam, "unknown metric '" + name + "'");
    return m;
  };
  spec.metric_primary = metric(o.metric);
  spec.metric_secondary = metric(o.metric2);
  spec.bins = o.bins;
  spec.width_px = o.width;
  spec.height_px = o.height;
  if (!o.filter.empty()) spec.filter = o.filter;
  spec.page = o.page;
  spec.page_size = o.page_size;

  Expectations expect;
  if (!o.expectations.empty()) expect = Expectations::load(o.expectations);
  const std::string svg = render_svg(*store, spec, &expect);
  if (o.out_path.empty() || o.out_path == "-") {
    out << svg;
    return kOk;
  }
  std::ofstream file(o.out_path, std::ios::binary | std::ios::trunc);
  file << svg;
  file.close();
  if (!file) throw Error(ErrorCode::kIo, "cannot write '" + o.out_path + "'");
  out << "wrote " << o.out_path << "\n";
  return kOk;
}

inline int cmd_validate(const Options& o, std::ostream& out) {
  std::vector<std::string> warnings;
  const std::vector<Task> tasks = jsonl::read_file(o.input, &warnings);
  ValidationReport report = validate_trace(tasks, o.lenient ? ValidationMode::kLenient : ValidationMode::kStrict);
  for (const auto& w : warnings) out << "warning " << w << "\n";
  print_findings(out, report);
  out << tasks.size() << " tasks, " << report.errors.size() << " errors, " << report.warnings.size()
      << " warnings\n";
  return report.ok() ? kOk : kInvalid;
}

inline int cmd_stats(const Options& o, std::ostream& out) {
  auto store = open_store(o.store);
  const TraceMeta meta = store->meta();
  const auto components = store->components();
  if (o.json) {
    api::Json j = api::to_json(meta);
    api::Json items = api::Json::array();
    for (const auto& c : components) items.push_back(api::to_json(c));
    j["components"] = std::move(items);
    out << j.dump(2) << "\n";
    return kOk;
  }
  out << "format " << meta.format_version << "\n"
      << "tasks " << meta.task_count << "\n"
      << "time " << seconds(meta.time_min) << " .. " << seconds(meta.time_max) << "\n"
      << "components " << meta.component_count << "\n";
  for (const auto& c : components)
    out << fmt::format("  {:<28} {:>9} {:>14} {:>14}\n", c.name, c.task_count, seconds(c.first_start),
                       seconds(c.last_end));
  return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Trace recording, querying and visualisation for GPU simulations", "daisen"};
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Validate a daisen-jsonl trace and build a store");
  ingest->add_option("trace", o.input, "Input trace (daisen-jsonl v1)")->required();
  ingest->add_option("-o,--output", o.output, "Store path, e.g. run.dtrace")->capture_default_str();
  ingest->add_flag("--lenient", o.lenient, "Downgrade soft findings to warnings");

  auto* gen = app.add_subcommand("gen", "Run the GPU model and store its trace");
  gen->add_option("-c,--config", o.sim_config, "sim.toml settings applied over the preset");
  gen->add_option("--preset", o.preset, "dispatch-bound or compute-bound")->capture_default_str();
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--dispatch-rate", o.dispatch_rate, "Work-groups dispatched per cycle");
  gen->add_option("-o,--output", o.output, "Store path")->capture_default_str();
  gen->add_option("--jsonl", o.jsonl_out, "Also write the raw trace here");

  o.store = default_store();
  auto* serve = app.add_subcommand("serve", "Serve the query API (bind: --bind, else DAISEN_BIND, else 127.0.0.1:3001)");
  serve->add_option("-s,--store", o.store, "Store path (env DAISEN_STORE)")->capture_default_str();
  serve->add_option("--bind", o.bind, "host:port");
  serve->add_option("-e,--expectations", o.expectations, "Anticipated metric values (TOML)");
  serve->add_option("--static", o.static_dir, "Directory served at /");

  auto* render = app.add_subcommand("render", "Render a view to SVG");
  render->add_option("-s,--store", o.store, "Store path (env DAISEN_STORE)")->capture_default_str();
  render->add_option("--kind", o.kind, "overview, component or task");
  render->add_option("--component", o.component, "Component for the component view");
  render->add_option("--task", o.task_id, "Task id for the task view");
  render->add_option("--from", o.from, "Window start (s)");
  render->add_option("--to", o.to, "Window end (s)");
  render->add_option("--metric", o.metric, "Primary overview metric");
  render->add_option("--metric2", o.metric2, "Secondary overview metric");
  render->add_option("--bins", o.bins, "Bins per chart")->capture_default_str();
  render->add_option("--width", o.width, "Image width (px)")->capture_default_str();
  render->add_option("--height", o.height, "Image height (px)")->capture_default_str();
  render->add_option("--filter", o.filter, "Component regex for the overview");
  render->add_option("--page", o.page, "Overview page")->capture_default_str();
  render->add_option("--page-size", o.page_size, "Charts per overview page")->capture_default_str();
  render->add_option("-e,--expectations", o.expectations, "Anticipated metric values (TOML)");
  render->add_option("--out", o.out_path, "Output file, '-' for stdout");

  auto* validate = app.add_subcommand("validate", "Check a daisen-jsonl trace without storing it");
  validate->add_option("trace", o.input, "Input trace")->required();
  validate->add_flag("--lenient", o.lenient, "Downgrade soft findings to warnings");

  auto* stats = app.add_subcommand("stats", "Summarise a store");
  stats->add_option("store", o.store, "Store path (env DAISEN_STORE)")->capture_default_str();
  stats->add_flag("--json", o.json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << e.what() << "\n";
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
      err << sub->help();
    else
      err << app.help();
    return kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(o, out);
    if (*gen) return cmd_gen(o, out);
    if (*serve) return cmd_serve(o, out);
    if (*render) return cmd_render(o, out);
    if (*validate) return cmd_validate(o, out);
    if (*stats) return cmd_stats(o, out);
  } catch (const Error& e) {
    err << "daisen: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "daisen: " << e.what() << "\n";
    return kIoFailure;
  }
  return kUsage;
}

}  // namespace daisen::cli

#endif  // DAISEN_CLI_HPP
