#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "daisen/simkit.hpp"
#include "daisen/svg_render.hpp"
#include "fixtures.hpp"

using namespace daisen;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<std::string> attr_all(const std::string& svg, const std::string& name) {
  std::vector<std::string> out;
  const std::regex re(" " + name + "=\"([^\"]*)\"");
  for (std::sregex_iterator it(svg.begin(), svg.end(), re), end; it != end; ++it) out.push_back((*it)[1]);
  return out;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell == "nan" ? std::nan("") : std::stod(cell));
  return out;
}

ViewSpec component_spec(std::string c, double t0, double t1) {
  ViewSpec s;
  s.kind = ViewKind::kComponent;
  s.component = std::move(c);
  s.t0 = t0;
  s.t1 = t1;
  return s;
}

void check_golden(const std::string& name, const std::string& svg) {
  const std::string path = std::string(DAISEN_GOLDEN_DIR) + "/" + name;
  if (const char* u = std::getenv("DAISEN_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    std::ofstream(path, std::ios::binary) << svg;
    return;
  }
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing golden " << path;
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), svg) << name;
}

class QuartetSvg : public ::testing::Test {
 protected:
  void SetUp() override { store.ingest(fixtures::quartet(), ValidationMode::kStrict); }
  TraceStore store;
};

}  // namespace

TEST_F(QuartetSvg, ComponentViewOfL1) {
  const std::string svg = render_svg(store, component_spec("L1_0", 0, 10));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<rect class=\"task\""), 1u);
  EXPECT_EQ(attr_all(svg, "data-task-id"), (std::vector<std::string>{"ri"}));
  EXPECT_EQ(count(svg, "class=\"axis\""), 1u);
  EXPECT_GE(count(svg, "class=\"tick-label\""), 2u);
  EXPECT_EQ(count(svg, "<g class=\"legend\">"), 1u);
  EXPECT_EQ(count(svg, "class=\"legend-key\""), 1u);
  EXPECT_NE(svg.find(">Request In-Read Memory</text>"), std::string::npos);
  // bar spans [2,8) of [0,10) over a 690 px plot starting at x=70
  EXPECT_NE(svg.find("x=\"208.000\" y=\"28.000\" width=\"414.000\""), std::string::npos);
}

TEST_F(QuartetSvg, Deterministic) {
  for (auto spec : {component_spec("CU0", 0, 10), component_spec("L1_0", 1, 9)}) {
    EXPECT_EQ(render_svg(store, spec), render_svg(store, spec));
  }
  ViewSpec task;
  task.kind = ViewKind::kTask;
  task.task_id = "ri";
  task.t0 = 0;
  task.t1 = 10;
  EXPECT_EQ(render_svg(store, task), render_svg(store, task));
}

TEST_F(QuartetSvg, TaskViewRegions) {
  ViewSpec spec;
  spec.kind = ViewKind::kTask;
  spec.task_id = "ri";
  spec.t0 = 0;
  spec.t1 = 10;
  const std::string svg = render_svg(store, spec);
  for (const char* label : {">Parent<", ">Current<", ">Subtasks<"}) EXPECT_NE(svg.find(label), std::string::npos);
  EXPECT_EQ(attr_all(svg, "data-task-id"), (std::vector<std::string>{"ri", "ro", "ri"}));  // view, parent, current
}

TEST_F(QuartetSvg, Errors) {
  auto code = [&](const ViewSpec& s) {
    try {
      render_svg(store, s);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  EXPECT_EQ(code(component_spec("nope", 0, 10)), ErrorCode::kUnknownId);
  EXPECT_EQ(code(component_spec("L1_0", 5, 5)), ErrorCode::kBadRange);
  ViewSpec s = component_spec("L1_0", 0, 10);
  s.width_px = 10;
  EXPECT_EQ(code(s), ErrorCode::kBadParam);
  ViewSpec t;
  t.kind = ViewKind::kTask;
  t.task_id = "missing";
  EXPECT_EQ(code(t), ErrorCode::kUnknownId);
  t.task_id.reset();
  EXPECT_EQ(code(t), ErrorCode::kBadParam);
}

TEST_F(QuartetSvg, EscapesText) {
  TraceStore s;
  s.ingest(std::vector<Task>{fixtures::make("a", {}, "K<&>", "R\"", "X<1>", 0, 1)}, ValidationMode::kStrict);
  const std::string svg = render_svg(s, component_spec("X<1>", 0, 1));
  EXPECT_EQ(svg.find("K<&>"), std::string::npos);
  EXPECT_NE(svg.find("K&lt;&amp;&gt;-R&quot;"), std::string::npos);
}

TEST(SvgFormat, Numbers) {
  EXPECT_EQ(svg_detail::num(1.0), "1.000");
  EXPECT_EQ(svg_detail::num(-0.0), "0.000");
  EXPECT_EQ(svg_detail::num(-1e-9), "0.000");
  EXPECT_EQ(svg_detail::num(2.0 / 3.0), "0.667");
}

TEST(SvgOverview, DispatchBoundSimdUtilisationIsLow) {
  auto cfg = sim::default_config();
  TraceStore store;
  store.ingest(fixtures::simulate(cfg), ValidationMode::kStrict);
  const auto meta = store.meta();
  auto expect = Expectations::load(std::string(DAISEN_CONFIG_DIR) + "/expectations.toml");
  ViewSpec spec;
  spec.kind = ViewKind::kOverview;
  spec.filter = "SIMD";
  spec.page_size = 8;
  spec.t0 = meta.time_min;
  spec.t1 = meta.time_max;
  spec.width_px = 1600;
  spec.height_px = 900;
  const std::string svg = render_svg(store, spec, &expect);
  const auto comps = attr_all(svg, "data-component");
  const auto values = attr_all(svg, "data-values");
  const auto means = attr_all(svg, "data-mean");
  const auto refs = attr_all(svg, "data-reference");
  ASSERT_EQ(comps.size(), 8u);
  ASSERT_EQ(values.size(), 8u);
  ASSERT_EQ(refs.size(), 8u);
  EXPECT_EQ(count(svg, "class=\"reference\""), 8u);
  auto snap = store.snapshot();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    EXPECT_NE(comps[i].find("SIMD"), std::string::npos);
    const auto series = compute_series(*snap, comps[i], MetricKind::kConcurrentTasks, spec.t0, spec.t1, spec.bins);
    const auto embedded = parse_values(values[i]);
    ASSERT_EQ(embedded.size(), series.values.size());
    double sum = 0;
    for (std::size_t k = 0; k < embedded.size(); ++k) {
      EXPECT_EQ(embedded[k], series.values[k]);  // shortest round-trip text is exact
      sum += series.values[k];
    }
    EXPECT_DOUBLE_EQ(std::stod(means[i]), sum / static_cast<double>(embedded.size()));
    EXPECT_EQ(std::stod(refs[i]), 1.0);
    EXPECT_LT(std::stod(means[i]), 0.5);
  }
}

TEST(SvgOverview, SecondaryAxis) {
  TraceStore store;
  store.ingest(fixtures::quartet(), ValidationMode::kStrict);
  ViewSpec spec;
  spec.t0 = 0;
  spec.t1 = 10;
  spec.bins = 10;
  spec.metric_primary = MetricKind::kBufferPressure;
  spec.metric_secondary = MetricKind::kAvgReqLatency;
  const std::string svg = render_svg(store, spec);
  EXPECT_EQ(attr_all(svg, "data-metric2").size(), 2u);
  EXPECT_EQ(count(svg, "class=\"series secondary\""), 2u);
  EXPECT_EQ(count(svg, "class=\"axis secondary\""), 2u);
  // latency only in the bin where ri ends; other bins are gaps
  const auto v2 = attr_all(svg, "data-values2");
  EXPECT_EQ(v2[1], "nan,nan,nan,nan,nan,nan,nan,nan,6,nan");
}

TEST(SvgGolden, FrozenOutputs) {
  TraceStore store;
  store.ingest(fixtures::quartet(), ValidationMode::kStrict);
  check_golden("quartet_component_cu0.svg", render_svg(store, component_spec("CU0", 0, 10)));
  ViewSpec task;
  task.kind = ViewKind::kTask;
  task.task_id = "ro";
  task.t0 = 0;
  task.t1 = 10;
  check_golden("quartet_task_ro.svg", render_svg(store, task));
  ViewSpec over;
  over.t0 = 0;
  over.t1 = 10;
  over.bins = 20;
  over.metric_secondary = MetricKind::kBufferPressure;
  check_golden("quartet_overview.svg", render_svg(store, over));
}
