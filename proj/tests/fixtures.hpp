#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "daisen/collector.hpp"
#include "daisen/simkit.hpp"
#include "daisen/trace_model.hpp"

namespace fixtures {

using daisen::Task;

inline Task make(std::string id, std::optional<std::string> parent, std::string category, std::string action,
                 std::string location, double start, double end) {
  Task t;
  t.id = std::move(id);
  t.parent_id = std::move(parent);
  t.category = std::move(category);
  t.action = std::move(action);
  t.location = std::move(location);
  t.start = start;
  t.end = end;
  return t;
}

// ReqOut [0,10) at CU0 with its ReqIn [2,8) at L1_0.
inline std::vector<Task> quartet() {
  return {make("ro", std::nullopt, "Request Out", "Read Memory", "CU0", 0, 10),
          make("ri", "ro", "Request In", "Read Memory", "L1_0", 2, 8)};
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("daisen_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Random strict-valid trace: one root, nested generic tasks contained in
// their parents, and Request Out/In pairs at distinct locations. Times sit
// on a coarse grid so equal starts and touching ends are common.
inline std::vector<Task> random_trace(std::mt19937_64& rng, std::size_t n, std::size_t location_count = 4,
                                      double grid = 1.0) {
  std::vector<Task> out;
  if (n == 0) return out;
  std::uniform_int_distribution<int> coin(0, 99);
  auto loc = [&](std::size_t i) { return "L" + std::to_string(i); };
  std::uniform_int_distribution<std::size_t> pick_loc(0, location_count - 1);
  const double span = grid * static_cast<double>(4 * n + 8);
  out.push_back(make("t0", std::nullopt, "Kernel", "Run", loc(0), 0.0, span));
  static const char* kActions[] = {"Add", "Mul", "Load", "Store"};
  while (out.size() < n) {
    std::uniform_int_distribution<std::size_t> pick_parent(0, out.size() - 1);
    const Task parent = out[pick_parent(rng)];
    const auto steps = static_cast<long>(std::round((parent.end - parent.start) / grid));
    std::uniform_int_distribution<long> pos(0, std::max(0L, steps));
    long a = pos(rng), b = pos(rng);
    if (a > b) std::swap(a, b);
    const double s = parent.start + a * grid, e = parent.start + b * grid;
    const std::string id = "t" + std::to_string(out.size());
    const std::string action = kActions[coin(rng) % 4];
    if (coin(rng) < 30 && out.size() + 1 < n) {
      // request pair; the ReqIn nests inside the ReqOut
      const std::size_t si = pick_loc(rng);
      const std::size_t di = (si + 1 + pick_loc(rng) % (location_count - 1)) % location_count;
      const std::string src = loc(si), dst = loc(di);
      out.push_back(make(id, parent.id, "Request Out", action, src, s, e));
      std::uniform_int_distribution<long> inner(a, b);
      long c = inner(rng), d = inner(rng);
      if (c > d) std::swap(c, d);
      out.push_back(make("t" + std::to_string(out.size()), id, "Request In", action, dst, parent.start + c * grid,
                         parent.start + d * grid));
    } else {
      const std::string category = coin(rng) < 50 ? "Instruction" : "Wavefront";
      out.push_back(make(id, parent.id, category, action, coin(rng) < 60 ? parent.location : loc(pick_loc(rng)), s, e));
    }
  }
  return out;
}

inline std::vector<Task> simulate(const daisen::sim::SimConfig& cfg, std::uint64_t collector_seed = 42,
                                  daisen::sim::SimResult* result = nullptr) {
  auto sink = std::make_shared<daisen::MemorySink>();
  daisen::CollectorOptions opts;
  opts.seed = collector_seed;
  daisen::CollectorSession session(sink, opts);
  auto r = daisen::sim::simulate(cfg, session);
  session.close();
  if (result) *result = r;
  return sink->records();
}

// A small dispatch-bound configuration for fast tests.
inline daisen::sim::SimConfig small_config() {
  auto cfg = daisen::sim::default_config();
  cfg.kernel.work_groups = 64;
  return cfg;
}

}  // namespace fixtures
