#ifndef DAISEN_SIMKIT_HPP
#define DAISEN_SIMKIT_HPP

// A small deterministic event-driven GPU model that emits hierarchical traces
// through a CollectorSession:
//
//   Command Processor -> Compute Units (wavefront slots, SIMD units)
//                     -> L1 per CU -> L2 banks -> DRAM
//
// Time advances in integer cycles; every emitted time is cycle * clock_period.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "daisen/collector.hpp"
#include "daisen/config.hpp"
#include "daisen/error.hpp"

namespace daisen::sim {

struct KernelConfig {
  std::uint32_t work_groups = 2048;
  std::uint32_t wavefronts_per_wg = 1;
  std::uint32_t insts_per_wavefront = 2;
  double mem_inst_fraction = 0.1;
};

struct MemoryConfig {
  std::uint32_t l1_latency = 8;     // cycles
  std::uint32_t l2_latency = 24;    // cycles
  std::uint32_t dram_latency = 100; // cycles
  double l1_hit_rate = 0.8;
  double l2_hit_rate = 0.7;
};

struct SimConfig {
  std::uint32_t cu_count = 8;
  std::uint32_t simd_per_cu = 4;
  std::uint32_t simd_width = 16;  // work-items per cycle
  std::uint32_t max_wavefronts_per_cu = 40;
  std::uint32_t dispatch_rate = 1;  // work-groups per cycle
  double clock_period = 1e-9;       // seconds
  KernelConfig kernel;
  MemoryConfig memory;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, what); };
    if (cu_count < 1) fail("cu_count must be at least 1");
    if (simd_per_cu < 1) fail("simd_per_cu must be at least 1");
    if (simd_width < 1) fail("simd_width must be at least 1");
    if (dispatch_rate < 1) fail("dispatch_rate must be at least 1");
    if (!(clock_period > 0.0) || !std::isfinite(clock_period)) fail("clock_period must be positive");
    if (kernel.wavefronts_per_wg < 1 || kernel.wavefronts_per_wg > 8)
      fail("wavefronts_per_wg must be in [1, 8]");
    if (max_wavefronts_per_cu < kernel.wavefronts_per_wg)
      fail("max_wavefronts_per_cu cannot hold one work-group");
    if (kernel.insts_per_wavefront < 1) fail("insts_per_wavefront must be at least 1");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(kernel.mem_inst_fraction)) fail("mem_inst_fraction must be in [0, 1]");
    if (!unit(memory.l1_hit_rate) || !unit(memory.l2_hit_rate)) fail("hit rates must be in [0, 1]");
    if (memory.l1_latency < 1 || memory.l2_latency < 1 || memory.dram_latency < 1)
      fail("latencies must be at least one cycle");
  }
};

// Dispatch-bound preset: many short work-groups with few memory instructions,
// so the Command Processor, not the CUs or caches, limits throughput.
inline SimConfig default_config() { return SimConfig{}; }

// One large work-group: dispatch is a single cycle at either rate.
inline SimConfig compute_bound_config() {
  SimConfig c;
  c.kernel.work_groups = 1;
  c.kernel.wavefronts_per_wg = 8;
  c.kernel.insts_per_wavefront = 400;
  c.kernel.mem_inst_fraction = 0.1;
  return c;
}

// Applies `key = value` settings from a sim.toml file on top of `base`.
inline SimConfig parse_config(const std::vector<config::Entry>& entries, SimConfig base = {}) {
  auto count = [](const config::Entry& e) {
    const double v = config::as_number(e);
    if (v < 0 || v != std::floor(v) || v > 4e9)
      throw Error(ErrorCode::kConfig, "'" + e.key + "' must be a non-negative integer");
    return static_cast<std::uint32_t>(v);
  };
  for (const auto& e : entries) {
    const std::string name = e.section.empty() ? e.key : e.section + "." + e.key;
    if (name == "cu_count") base.cu_count = count(e);
    else if (name == "simd_per_cu") base.simd_per_cu = count(e);
    else if (name == "simd_width") base.simd_width = count(e);
    else if (name == "max_wavefronts_per_cu") base.max_wavefronts_per_cu = count(e);
    else if (name == "dispatch_rate") base.dispatch_rate = count(e);
    else if (name == "clock_period") base.clock_period = config::as_number(e);
    else if (name == "seed") base.seed = static_cast<std::uint64_t>(config::as_number(e));
    else if (name == "kernel.work_groups") base.kernel.work_groups = count(e);
    else if (name == "kernel.wavefronts_per_wg") base.kernel.wavefronts_per_wg = count(e);
    else if (name == "kernel.insts_per_wavefront") base.kernel.insts_per_wavefront = count(e);
    else if (name == "kernel.mem_inst_fraction") base.kernel.mem_inst_fraction = config::as_number(e);
    else if (name == "memory.l1_latency") base.memory.l1_latency = count(e);
    else if (name == "memory.l2_latency") base.memory.l2_latency = count(e);
    else if (name == "memory.dram_latency") base.memory.dram_latency = count(e);
    else if (name == "memory.l1_hit_rate") base.memory.l1_hit_rate = config::as_number(e);
    else if (name == "memory.l2_hit_rate") base.memory.l2_hit_rate = config::as_number(e);
    else throw Error(ErrorCode::kConfig, "line " + std::to_string(e.line) + ": unknown setting '" + name + "'");
  }
  base.validate();
  return base;
}

inline SimConfig load_config(const std::string& path) {
  try {
    return parse_config(config::parse_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig && e.message().rfind(path, 0) != 0)
      throw Error(ErrorCode::kConfig, path + ": " + e.message());
    throw;
  }
}

struct SimResult {
  double total_time = 0.0;  // seconds
  std::uint64_t total_cycles = 0;
  std::size_t tasks_emitted = 0;
  std::string sink;
};

namespace detail {

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) draw keyed by position in the kernel rather than by event
// order, so timing changes never change which accesses hit or miss.
inline double keyed_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                            std::uint64_t salt) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ a);
  h = mix(h ^ (b << 1));
  h = mix(h ^ (c << 2));
  h = mix(h ^ (salt << 3));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline std::string two_digits(std::uint32_t i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

class Simulator {
 public:
  Simulator(const SimConfig& config, CollectorSession& session)
      : cfg_(config), session_(session), cus_(config.cu_count) {
    for (std::uint32_t i = 0; i < cfg_.cu_count; ++i) {
      Cu& cu = cus_[i];
      cu.name = "GPU1.CU" + two_digits(i);
      cu.l1 = "GPU1.L1_" + std::to_string(i);
      cu.simd_busy_until.assign(cfg_.simd_per_cu, 0);
      for (std::uint32_t s = 0; s < cfg_.simd_per_cu; ++s)
        cu.simd_names.push_back(cu.name + ".SIMD" + std::to_string(s));
    }
    l2_banks_ = std::max<std::uint32_t>(1, cfg_.cu_count / 4);
    compute_cycles_ = (64 + cfg_.simd_width - 1) / cfg_.simd_width;
  }

  std::uint64_t run() {
    kernel_id_ = session_.begin_task(std::nullopt, "Kernel", "Launch Kernel",
                                     "GPU1.CommandProcessor", 0.0);
    wgs_remaining_ = cfg_.kernel.work_groups;
    if (wgs_remaining_ == 0) {
      session_.end_task(kernel_id_, 0.0);
      return 0;
    }
    schedule(0, [this] { dispatch_tick(); });
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      now_ = ev.cycle;
      ev.action();
    }
    return kernel_end_;
  }

 private:
  struct Wavefront {
    TaskId task;
    std::uint32_t wg = 0;
    std::uint32_t index = 0;
    std::uint32_t next_inst = 0;
    std::uint32_t cu = 0;
    std::uint32_t simd = 0;  // fixed at launch
  };

  struct WorkGroup {
    TaskId task;
    std::uint32_t wavefronts_left = 0;
  };

  struct Cu {
    std::string name;
    std::string l1;
    std::vector<std::string> simd_names;
    std::vector<std::uint64_t> simd_busy_until;
    std::uint32_t free_slots = 0;
    std::uint32_t next_simd = 0;
    std::deque<std::uint32_t> ready;  // wavefront indices, round-robin order
    std::optional<std::uint64_t> tick_at;
  };

  struct Event {
    std::uint64_t cycle;
    std::uint64_t seq;
    std::function<void()> action;
    bool operator>(const Event& o) const {
      return cycle != o.cycle ? cycle > o.cycle : seq > o.seq;
    }
  };

  double at(std::uint64_t cycle) const { return static_cast<double>(cycle) * cfg_.clock_period; }

  void schedule(std::uint64_t cycle, std::function<void()> action) {
    events_.push(Event{cycle, seq_++, std::move(action)});
  }

  void dispatch_tick() {
    std::uint32_t dispatched = 0;
    while (dispatched < cfg_.dispatch_rate && next_wg_ < cfg_.kernel.work_groups) {
      auto cu = find_cu();
      if (!cu) break;
      cus_[*cu].free_slots -= cfg_.kernel.wavefronts_per_wg;
      const std::uint32_t wg = next_wg_++;
      schedule(now_ + 1, [this, wg, c = *cu] { start_work_group(wg, c); });
      ++dispatched;
    }
    if (next_wg_ < cfg_.kernel.work_groups) schedule(now_ + 1, [this] { dispatch_tick(); });
  }

  // Round-robin placement starting after the last CU that received work.
  std::optional<std::uint32_t> find_cu() {
    for (std::uint32_t k = 0; k < cfg_.cu_count; ++k) {
      const std::uint32_t i = (rr_ + k) % cfg_.cu_count;
      if (!slots_initialised_) {
        for (Cu& cu : cus_) cu.free_slots = cfg_.max_wavefronts_per_cu;
        slots_initialised_ = true;
      }
      if (cus_[i].free_slots >= cfg_.kernel.wavefronts_per_wg) {
        rr_ = (i + 1) % cfg_.cu_count;
        return i;
      }
    }
    return std::nullopt;
  }

  void start_work_group(std::uint32_t wg, std::uint32_t cu_index) {
    Cu& cu = cus_[cu_index];
    WorkGroup group;
    group.task = session_.begin_task(kernel_id_, "Work-Group", "Execute Work-Group", cu.name,
                                     at(now_), {{"wg", std::to_string(wg)}});
    group.wavefronts_left = cfg_.kernel.wavefronts_per_wg;
    const auto group_index = static_cast<std::uint32_t>(groups_.size());
    groups_.push_back(group);
    for (std::uint32_t w = 0; w < cfg_.kernel.wavefronts_per_wg; ++w) {
      Wavefront wf;
      wf.wg = group_index;
      wf.index = w;
      wf.cu = cu_index;
      wf.simd = cu.next_simd;
      cu.next_simd = (cu.next_simd + 1) % cfg_.simd_per_cu;
      wf.task = session_.begin_task(groups_[group_index].task, "Wavefront", "Execute Wavefront",
                                    cu.name, at(now_));
      cu.ready.push_back(static_cast<std::uint32_t>(wavefronts_.size()));
      wavefronts_.push_back(std::move(wf));
    }
    request_tick(cu_index, now_);
  }

  void request_tick(std::uint32_t cu_index, std::uint64_t cycle) {
    Cu& cu = cus_[cu_index];
    if (cu.tick_at && *cu.tick_at <= cycle && *cu.tick_at >= now_) return;
    cu.tick_at = cycle;
    schedule(cycle, [this, cu_index, cycle] {
      if (cus_[cu_index].tick_at == cycle) {
        cus_[cu_index].tick_at.reset();
        cu_tick(cu_index);
      }
    });
  }

  bool is_memory(const Wavefront& wf) const {
    return keyed_uniform(cfg_.seed, wf.wg, wf.index, wf.next_inst, 1) <
           cfg_.kernel.mem_inst_fraction;
  }

  // Each wavefront issues compute to its own SIMD unit when that unit is
  // free; at most one memory issue per CU each cycle. Ready wavefronts are
  // visited round-robin.
  void cu_tick(std::uint32_t cu_index) {
    Cu& cu = cus_[cu_index];
    bool memory_issued = false;
    std::deque<std::uint32_t> waiting;
    while (!cu.ready.empty()) {
      const std::uint32_t w = cu.ready.front();
      cu.ready.pop_front();
      Wavefront& wf = wavefronts_[w];
      if (is_memory(wf)) {
        if (memory_issued) {
          waiting.push_back(w);
          continue;
        }
        memory_issued = true;
        issue_memory(w);
      } else {
        if (cu.simd_busy_until[wf.simd] > now_) {
          waiting.push_back(w);
          continue;
        }
        issue_compute(w, wf.simd);
      }
    }
    cu.ready = std::move(waiting);
    if (!cu.ready.empty()) {
      // wake when the earliest blocked wavefront could issue
      std::uint64_t next = UINT64_MAX;
      for (std::uint32_t w : cu.ready) {
        const Wavefront& wf = wavefronts_[w];
        next = std::min(next, is_memory(wf) ? now_ + 1 : cu.simd_busy_until[wf.simd]);
      }
      request_tick(cu_index, std::max(next, now_ + 1));
    }
  }

  void issue_compute(std::uint32_t w, std::uint32_t simd) {
    Wavefront& wf = wavefronts_[w];
    Cu& cu = cus_[wf.cu];
    static constexpr const char* kOps[] = {"ADD", "MUL", "FMA", "MOV"};
    const auto pick = static_cast<std::size_t>(
        keyed_uniform(cfg_.seed, wf.wg, wf.index, wf.next_inst, 2) * 4.0);
    const std::string op = kOps[std::min<std::size_t>(pick, 3)];
    const TaskId inst = session_.begin_task(
        wf.task, "Instruction", "Execute " + op + " Instruction", cu.simd_names[simd], at(now_),
        {{"op", op}, {"wf", std::to_string(w)}, {"wg", std::to_string(wf.wg)}});
    const std::uint64_t done = now_ + compute_cycles_;
    cu.simd_busy_until[simd] = done;
    schedule(done, [this, w, inst] {
      session_.end_task(inst, at(now_));
      instruction_done(w);
    });
  }

  void issue_memory(std::uint32_t w) {
    Wavefront& wf = wavefronts_[w];
    Cu& cu = cus_[wf.cu];
    const TaskId inst = session_.begin_task(
        wf.task, "Instruction", "Execute LOAD Instruction", cu.name, at(now_),
        {{"op", "LOAD"}, {"wf", std::to_string(w)}, {"wg", std::to_string(wf.wg)}});
    const TaskId req = session_.initiate_request(inst, "Read Memory", cu.name, at(now_));
    const double l1_draw = keyed_uniform(cfg_.seed, wf.wg, wf.index, wf.next_inst, 3);
    const double l2_draw = keyed_uniform(cfg_.seed, wf.wg, wf.index, wf.next_inst, 4);
    const auto bank = static_cast<std::uint32_t>(
        keyed_uniform(cfg_.seed, wf.wg, wf.index, wf.next_inst, 5) * l2_banks_);
    const std::string l1 = cu.l1;
    schedule(now_ + 1, [=, this] {
      serve_l1(req, l1, l1_draw, l2_draw, std::min(bank, l2_banks_ - 1), [=, this] {
        session_.receive_response(req, at(now_));
        session_.end_task(inst, at(now_));
        instruction_done(w);
      });
    });
  }

  // Each level: receive the request, spend its latency, forward on a miss,
  // complete, and deliver the response one cycle later.
  void serve_l1(const TaskId& req, const std::string& l1, double l1_draw, double l2_draw,
                std::uint32_t bank, std::function<void()> respond) {
    const TaskId in = session_.receive_request(req, l1, at(now_));
    schedule(now_ + cfg_.memory.l1_latency, [=, this] {
      auto finish = [=, this] {
        session_.complete_request(in, at(now_));
        schedule(now_ + 1, respond);
      };
      if (l1_draw < cfg_.memory.l1_hit_rate) {
        finish();
        return;
      }
      const TaskId out = session_.initiate_request(in, "Read Memory", l1, at(now_));
      const std::string l2 = "GPU1.L2_" + std::to_string(bank);
      schedule(now_ + 1, [=, this] {
        serve_l2(out, l2, l2_draw, [=, this] {
          session_.receive_response(out, at(now_));
          finish();
        });
      });
    });
  }

  void serve_l2(const TaskId& req, const std::string& l2, double l2_draw,
                std::function<void()> respond) {
    const TaskId in = session_.receive_request(req, l2, at(now_));
    schedule(now_ + cfg_.memory.l2_latency, [=, this] {
      auto finish = [=, this] {
        session_.complete_request(in, at(now_));
        schedule(now_ + 1, respond);
      };
      if (l2_draw < cfg_.memory.l2_hit_rate) {
        finish();
        return;
      }
      const TaskId out = session_.initiate_request(in, "Read Memory", l2, at(now_));
      schedule(now_ + 1, [=, this] {
        const TaskId dram = session_.receive_request(out, "GPU1.DRAM0", at(now_));
        schedule(now_ + cfg_.memory.dram_latency, [=, this] {
          session_.complete_request(dram, at(now_));
          schedule(now_ + 1, [=, this] {
            session_.receive_response(out, at(now_));
            finish();
          });
        });
      });
    });
  }

  void instruction_done(std::uint32_t w) {
    Wavefront& wf = wavefronts_[w];
    ++wf.next_inst;
    if (wf.next_inst < cfg_.kernel.insts_per_wavefront) {
      cus_[wf.cu].ready.push_back(w);
      request_tick(wf.cu, now_);
      return;
    }
    session_.end_task(wf.task, at(now_));
    WorkGroup& group = groups_[wf.wg];
    if (--group.wavefronts_left > 0) return;
    session_.end_task(group.task, at(now_));
    cus_[wf.cu].free_slots += cfg_.kernel.wavefronts_per_wg;
    if (--wgs_remaining_ == 0) {
      kernel_end_ = now_;
      session_.end_task(kernel_id_, at(now_));
    }
  }

  const SimConfig& cfg_;
  CollectorSession& session_;
  std::vector<Cu> cus_;
  std::vector<Wavefront> wavefronts_;
  std::vector<WorkGroup> groups_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint32_t next_wg_ = 0;
  std::uint32_t wgs_remaining_ = 0;
  std::uint32_t rr_ = 0;
  std::uint32_t l2_banks_ = 1;
  std::uint32_t compute_cycles_ = 4;
  bool slots_initialised_ = false;
  TaskId kernel_id_;
  std::uint64_t kernel_end_ = 0;
};

}  // namespace detail

// Runs one kernel to completion, emitting every task through `session`.
// The caller owns flushing.
inline SimResult simulate(const SimConfig& config, CollectorSession& session) {
  config.validate();
  const std::size_t before = session.completed_count();
  detail::Simulator sim(config, session);
  const std::uint64_t cycles = sim.run();
  SimResult result;
  result.total_cycles = cycles;
  result.total_time = static_cast<double>(cycles) * config.clock_period;
  result.tasks_emitted = session.completed_count() - before;
  return result;
}

struct DispatchExperiment {
  SimResult rate1;
  SimResult rate2;
  double speedup = 0.0;
};

using SessionFactory = std::function<std::unique_ptr<CollectorSession>(std::uint32_t rate)>;

// Runs `base` at dispatch rates 1 and 2; speedup = time(rate 1) / time(rate 2).
inline DispatchExperiment dispatch_experiment(const SimConfig& base, const SessionFactory& make_session) {
  DispatchExperiment out;
  for (std::uint32_t rate : {1u, 2u}) {
    SimConfig cfg = base;
    cfg.dispatch_rate = rate;
    auto session = make_session(rate);
    SimResult r = simulate(cfg, *session);
    session->flush();
    (rate == 1 ? out.rate1 : out.rate2) = r;
  }
  out.speedup = out.rate1.total_time / out.rate2.total_time;
  return out;
}

inline DispatchExperiment dispatch_experiment(const SimConfig& base) {
  return dispatch_experiment(base, [&](std::uint32_t) {
    CollectorOptions opts;
    opts.seed = base.seed;
    return std::make_unique<CollectorSession>(std::make_shared<MemorySink>(), opts);
  });
}

}  // namespace daisen::sim

#endif  // DAISEN_SIMKIT_HPP
