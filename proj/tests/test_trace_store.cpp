#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <thread>

#include "daisen/collector.hpp"
#include "daisen/jsonl.hpp"
#include "daisen/trace_store.hpp"
#include "fixtures.hpp"

using namespace daisen;
using fixtures::make;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

std::vector<std::string> ids(const std::vector<Task>& tasks) {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.push_back(t.id);
  return out;
}

// Linear scan oracle for window queries.
std::vector<Task> brute_window(const std::vector<Task>& all, const std::string& loc, double t0, double t1) {
  std::vector<Task> out;
  for (const Task& t : all) {
    if (t.location != loc) continue;
    const bool hit = t.start == t.end ? (t0 <= t.start && t.start < t1) : (t.start < t1 && t.end > t0);
    if (hit) out.push_back(t);
  }
  std::sort(out.begin(), out.end(), [](const Task& a, const Task& b) {
    return a.start != b.start ? a.start < b.start : a.id < b.id;
  });
  return out;
}

}  // namespace

TEST(NaturalOrder, NumericRunsCompareByValue) {
  EXPECT_TRUE(natural_less("CU2", "CU10"));
  EXPECT_FALSE(natural_less("CU10", "CU2"));
  EXPECT_TRUE(natural_less("GPU1.CU01", "GPU1.CU02"));
  EXPECT_TRUE(natural_less("L1_9", "L1_10"));
  EXPECT_TRUE(natural_less("A", "B"));
  EXPECT_FALSE(natural_less("X1", "X1"));
}

TEST(TraceStore, EmptyIngest) {
  TraceStore store;
  auto meta = store.ingest({}, ValidationMode::kStrict);
  EXPECT_EQ(meta.task_count, 0u);
  EXPECT_EQ(meta.component_count, 0u);
  EXPECT_EQ(meta.format_version, "daisen-jsonl v1");
}

TEST(TraceStore, QuartetMetaAndComponents) {
  TraceStore store;
  auto meta = store.ingest(fixtures::quartet(), ValidationMode::kStrict);
  EXPECT_EQ(meta.task_count, 2u);
  EXPECT_EQ(meta.time_min, 0);
  EXPECT_EQ(meta.time_max, 10);
  auto comps = store.components();
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].name, "CU0");
  EXPECT_EQ(comps[1].name, "L1_0");
  EXPECT_EQ(comps[1].task_count, 1u);
  EXPECT_EQ(comps[1].first_start, 2);
  EXPECT_EQ(comps[1].last_end, 8);
}

TEST(TraceStore, StrictDuplicateIsValidationError) {
  TraceStore store;
  auto q = fixtures::quartet();
  q.push_back(q[1]);
  ValidationReport report;
  EXPECT_EQ(code_of([&] { store.ingest(q, ValidationMode::kStrict, &report); }), ErrorCode::kValidation);
  EXPECT_FALSE(report.ok());
  EXPECT_EQ(store.meta().task_count, 0u);  // nothing published
}

TEST(TraceStore, WindowQueries) {
  TraceStore store;
  std::vector<Task> t = {make("root", {}, "K", "R", "GPU", 0, 20), make("a", "root", "K", "R", "L1_0", 0, 10),
                         make("b", "root", "K", "R", "L1_0", 5, 15)};
  store.ingest(t, ValidationMode::kStrict);
  EXPECT_EQ(ids(store.query_window("L1_0", 12, 20)), (std::vector<std::string>{"b"}));
  EXPECT_EQ(ids(store.query_window("L1_0", 15, 20)), (std::vector<std::string>{}));
  EXPECT_EQ(ids(store.query_window("L1_0", 0, 20)), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(store.query_window("nowhere", 0, 20).empty());
  EXPECT_EQ(code_of([&] { store.query_window("L1_0", 5, 4); }), ErrorCode::kBadRange);
}

TEST(TraceStore, HalfOpenBoundaryWindow) {
  TraceStore store;
  store.ingest(std::vector<Task>{make("a", {}, "K", "R", "L", 0, 10)}, ValidationMode::kStrict);
  EXPECT_TRUE(store.query_window("L", 10, 12).empty());
}

TEST(TraceStore, ZeroDurationTasksInWindows) {
  TraceStore store;
  std::vector<Task> t = {make("root", {}, "K", "R", "X", 0, 100), make("z", "root", "K", "R", "L", 5, 5)};
  store.ingest(t, ValidationMode::kStrict);
  EXPECT_EQ(ids(store.query_window("L", 5, 6)), (std::vector<std::string>{"z"}));
  EXPECT_TRUE(store.query_window("L", 4, 5).empty());
  EXPECT_TRUE(store.query_window("L", 5, 5).empty());
}

TEST(TraceStore, TreeQueries) {
  TraceStore store;
  std::vector<Task> t = {make("k", {}, "Kernel", "Run", "CP", 0, 10), make("w", "k", "Work-Group", "Run", "CU0", 1, 9),
                         make("i", "w", "Instruction", "Add", "CU0", 2, 3)};
  store.ingest(t, ValidationMode::kStrict);
  EXPECT_EQ(ids(store.children("k")), (std::vector<std::string>{"w"}));
  EXPECT_EQ(ids(store.parent_chain("i")), (std::vector<std::string>{"i", "w", "k"}));
  EXPECT_EQ(store.get_task("w"), t[1]);
  EXPECT_EQ(code_of([&] { store.get_task("nope"); }), ErrorCode::kUnknownId);
  EXPECT_EQ(code_of([&] { store.children("nope"); }), ErrorCode::kUnknownId);

  TraceStore quartet;
  quartet.ingest(fixtures::quartet(), ValidationMode::kStrict);
  EXPECT_EQ(ids(quartet.parent_chain("ri")), (std::vector<std::string>{"ri", "ro"}));
}

TEST(TraceStore, ChildrenSortedByStartThenId) {
  TraceStore store;
  std::vector<Task> t = {make("p", {}, "K", "R", "A", 0, 10), make("c", "p", "K", "R", "B", 3, 4),
                         make("b", "p", "K", "R", "A", 1, 2), make("a", "p", "K", "R", "C", 3, 5)};
  store.ingest(t, ValidationMode::kStrict);
  EXPECT_EQ(ids(store.children("p")), (std::vector<std::string>{"b", "a", "c"}));
}

TEST(TraceStore, ListComponentsFilterAndErrors) {
  TraceStore store;
  std::vector<Task> t = {make("k", {}, "K", "R", "GPU1.DRAM0", 0, 10), make("a", "k", "K", "R", "GPU1.CU01", 0, 1),
                         make("b", "k", "K", "R", "GPU1.L1_0", 0, 1)};
  store.ingest(t, ValidationMode::kStrict);
  auto page = store.list_components("(CU|L1|L2)", 0, 16);
  EXPECT_EQ(page.total, 2u);
  ASSERT_EQ(page.items.size(), 2u);
  EXPECT_EQ(page.items[0].name, "GPU1.CU01");
  EXPECT_EQ(page.items[1].name, "GPU1.L1_0");
  EXPECT_EQ(store.list_components("", 0, 16).total, 3u);
  EXPECT_EQ(code_of([&] { store.list_components("(", 0, 16); }), ErrorCode::kBadRegex);
  EXPECT_EQ(code_of([&] { store.list_components("", 0, 0); }), ErrorCode::kBadParam);
}

TEST(TraceStoreProperty, PagingConcatenatesToFullList) {
  TraceStore store;
  std::vector<Task> t = {make("root", {}, "K", "R", "GPU", 0, 1)};
  for (int i = 0; i < 37; ++i)
    t.push_back(make("c" + std::to_string(i), "root", "K", "R", "GPU1.CU" + std::to_string(i), 0, 1));
  store.ingest(t, ValidationMode::kStrict);
  const auto all = store.list_components("CU", 0, 1000);
  ASSERT_EQ(all.total, 37u);
  for (std::size_t size = 1; size <= 40; ++size) {
    std::vector<std::string> joined;
    for (std::size_t p = 0; p * size < all.total + size; ++p) {
      auto page = store.list_components("CU", p, size);
      EXPECT_EQ(page.total, all.total);
      EXPECT_LE(page.items.size(), size);
      for (const auto& c : page.items) joined.push_back(c.name);
    }
    std::vector<std::string> expected;
    for (const auto& c : all.items) expected.push_back(c.name);
    ASSERT_EQ(joined, expected) << "page size " << size;
  }
  EXPECT_EQ(all.items[2].name, "GPU1.CU2");
  EXPECT_EQ(all.items[10].name, "GPU1.CU10");
}

TEST(TraceStoreProperty, WindowQueriesMatchBruteForce) {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 20; ++iter) {
    const auto trace = fixtures::random_trace(rng, 200 + rng() % 2000, 5, iter % 2 ? 1.0 : 1e-9);
    TraceStore store;
    store.ingest(trace, ValidationMode::kStrict);
    const auto meta = store.meta();
    std::uniform_real_distribution<double> u(meta.time_min - 5e-9, meta.time_max + 5e-9);
    for (int q = 0; q < 40; ++q) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      if (q % 5 == 0) b = a;
      if (q % 7 == 0) a = trace[rng() % trace.size()].start;
      if (a > b) std::swap(a, b);
      const std::string loc = "L" + std::to_string(rng() % 5);
      ASSERT_EQ(store.query_window(loc, a, b), brute_window(trace, loc, a, b));
    }
  }
}

TEST(TraceStoreFile, IngestWritesLogAndIndexAndReloads) {
  fixtures::TempDir dir;
  std::mt19937_64 rng(4);
  auto trace = fixtures::random_trace(rng, 500);
  trace[3].details = {{"op", "ADD"}, {"wf", "1"}};
  const auto base = dir / "run";
  {
    TraceStore store(base);
    store.ingest(trace, ValidationMode::kStrict);
    EXPECT_TRUE(std::filesystem::exists(store.log_path()));
    EXPECT_TRUE(std::filesystem::exists(store.index_path()));
    EXPECT_EQ(store.get_task(trace[3].id), trace[3]);
  }
  TraceStore reopened(base);
  EXPECT_EQ(reopened.meta().task_count, trace.size());
  EXPECT_EQ(reopened.get_task(trace[3].id).details.at("op"), "ADD");
  // the log itself is daisen-jsonl
  auto from_log = jsonl::read_file((dir / "run.dtrace").string());
  std::sort(from_log.begin(), from_log.end(), start_id_less);
  auto expected = trace;
  std::sort(expected.begin(), expected.end(), start_id_less);
  EXPECT_EQ(from_log, expected);
}

TEST(TraceStoreFile, MissingOrStaleIndexIsRebuilt) {
  fixtures::TempDir dir;
  std::mt19937_64 rng(8);
  const auto trace = fixtures::random_trace(rng, 300);
  const auto base = dir / "run";
  { TraceStore(base).ingest(trace, ValidationMode::kStrict); }
  std::filesystem::remove(dir / "run.dtidx");
  {
    TraceStore store(base);
    EXPECT_EQ(store.meta().task_count, trace.size());
    EXPECT_TRUE(std::filesystem::exists(dir / "run.dtidx"));
  }
  // replace the log behind the index's back
  const auto other = fixtures::random_trace(rng, 40);
  jsonl::write_file((dir / "run.dtrace").string(), other);
  TraceStore store(base);
  EXPECT_EQ(store.meta().task_count, other.size());
  EXPECT_EQ(store.get_task(other.back().id), other.back());
}

TEST(TraceStoreFile, CorruptIndexIsIgnored) {
  fixtures::TempDir dir;
  std::mt19937_64 rng(8);
  const auto trace = fixtures::random_trace(rng, 100);
  { TraceStore(dir / "run").ingest(trace, ValidationMode::kStrict); }
  {
    std::ofstream f(dir / "run.dtidx", std::ios::binary | std::ios::trunc);
    f << "DTIDX garbage";
  }
  TraceStore store(dir / "run");
  EXPECT_EQ(store.meta().task_count, trace.size());
}

TEST(TraceStoreFile, IngestFileAdoptsSourceAndReportsWarnings) {
  fixtures::TempDir dir;
  const auto src = (dir / "in.jsonl").string();
  {
    std::ofstream f(src);
    f << R"({"id":"ro","parent_id":null,"kind":"Request Out","what":"Read Memory","where":"CU0","start":0,"end":10,"x":1})"
      << "\n"
      << R"({"id":"ri","parent_id":"ro","kind":"Request In","what":"Read Memory","where":"L1_0","start":2,"end":8})"
      << "\n";
  }
  TraceStore store(dir / "run");
  std::vector<std::string> warnings;
  store.ingest_file(src, ValidationMode::kStrict, nullptr, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(store.meta().task_count, 2u);
  EXPECT_EQ(store.get_task("ri").parent_id, "ro");
  TraceStore reopened(dir / "run");
  EXPECT_EQ(reopened.get_task("ro").end, 10);
}

TEST(TraceStoreFile, IngestFileValidationFailureKeepsPreviousCorpus) {
  fixtures::TempDir dir;
  TraceStore store(dir / "run");
  store.ingest(fixtures::quartet(), ValidationMode::kStrict);
  const auto src = (dir / "bad.jsonl").string();
  jsonl::write_file(src, std::vector<Task>{make("a", {}, "K", "R", "L", 0, 1), make("b", {}, "K", "R", "L", 0, 1)});
  EXPECT_EQ(code_of([&] { store.ingest_file(src, ValidationMode::kStrict); }), ErrorCode::kValidation);
  EXPECT_EQ(store.meta().task_count, 2u);
  TraceStore reopened(dir / "run");
  EXPECT_EQ(reopened.meta().task_count, 2u);
}

TEST(TraceStore, ReingestIsDeterministic) {
  std::mt19937_64 rng(12);
  const auto trace = fixtures::random_trace(rng, 400);
  TraceStore a, b;
  a.ingest(trace, ValidationMode::kStrict);
  auto shuffled = trace;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  b.ingest(shuffled, ValidationMode::kStrict);
  for (const auto& c : a.components())
    EXPECT_EQ(a.query_window(c.name, 0, 1e9), b.query_window(c.name, 0, 1e9));
  EXPECT_EQ(a.snapshot()->ids, b.snapshot()->ids);
}

TEST(TraceStore, ReadersSeeWholeSnapshots) {
  TraceStore store;
  std::mt19937_64 rng(2);
  const auto small = fixtures::random_trace(rng, 10);
  const auto big = fixtures::random_trace(rng, 3000);
  store.ingest(small, ValidationMode::kStrict);
  std::atomic<bool> stop{false};
  std::thread reader([&] {
    while (!stop) {
      auto snap = store.snapshot();
      const auto n = snap->meta.task_count;
      ASSERT_TRUE(n == small.size() || n == big.size());
      ASSERT_EQ(snap->rows.size(), n);
    }
  });
  for (int i = 0; i < 10; ++i) store.ingest(i % 2 ? small : big, ValidationMode::kStrict);
  stop = true;
  reader.join();
}

TEST(StoreSink, CollectorPublishesIntoLiveStore) {
  TraceStore store;
  CollectorOptions opts;
  opts.seed = 1;
  CollectorSession session(std::make_shared<StoreSink>(store), opts);
  const TaskId ro = session.initiate_request(std::nullopt, "Read Memory", "CU0", 0);
  const TaskId ri = session.receive_request(ro, "L1_0", 2);
  session.complete_request(ri, 8);
  session.flush();
  EXPECT_EQ(store.meta().task_count, 1u);  // ReqOut still open; its child is an orphan for now
  session.receive_response(ro, 10);
  session.flush();
  EXPECT_EQ(store.meta().task_count, 2u);
  EXPECT_EQ(store.parent_chain(ri).size(), 2u);
}

TEST(TraceStoreProperty, ExhaustiveQueryRoundTrip) {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 10; ++iter) {
    const auto trace = fixtures::random_trace(rng, 100 + rng() % 1000, 6);
    TraceStore store;
    store.ingest(trace, ValidationMode::kStrict);
    const auto meta = store.meta();
    std::vector<Task> all;
    for (const auto& c : store.components()) {
      auto part = store.query_window(c.name, meta.time_min, meta.time_max + 1);
      all.insert(all.end(), part.begin(), part.end());
    }
    auto expected = trace;
    std::sort(all.begin(), all.end(), start_id_less);
    std::sort(expected.begin(), expected.end(), start_id_less);
    ASSERT_EQ(all, expected);
  }
}
