#ifndef DAISEN_COLLECTOR_HPP
#define DAISEN_COLLECTOR_HPP

#include <unistd.h>

#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "daisen/error.hpp"
#include "daisen/jsonl.hpp"
#include "daisen/trace_model.hpp"

namespace daisen {

// Destination for completed task records.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void write(std::span<const Task> batch) = 0;
  // Makes everything written so far durable.
  virtual void sync() = 0;
};

// Appends daisen-jsonl v1 records to a file.
class FileSink final : public RecordSink {
 public:
  explicit FileSink(const std::string& path, bool truncate = true)
      : path_(path), file_(std::fopen(path.c_str(), truncate ? "wb" : "ab"), &std::fclose) {
    if (!file_) throw Error(ErrorCode::kIo, "cannot open trace file '" + path + "'");
  }

  void write(std::span<const Task> batch) override {
    std::string chunk;
    for (const Task& t : batch) {
      chunk += jsonl::encode(t);
      chunk += '\n';
    }
    if (std::fwrite(chunk.data(), 1, chunk.size(), file_.get()) != chunk.size())
      throw Error(ErrorCode::kIo, "short write to '" + path_ + "'");
  }

  void sync() override {
    if (std::fflush(file_.get()) != 0 || ::fsync(::fileno(file_.get())) != 0)
      throw Error(ErrorCode::kIo, "cannot sync '" + path_ + "'");
  }

 private:
  std::string path_;
  std::unique_ptr<std::FILE, decltype(&std::fclose)> file_;
};

// Keeps records in memory; useful for tests and in-process analysis.
class MemorySink final : public RecordSink {
 public:
  void write(std::span<const Task> batch) override {
    std::lock_guard lock(mu_);
    records_.insert(records_.end(), batch.begin(), batch.end());
  }
  void sync() override {}

  std::vector<Task> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Task> records_;
};

// Produces unique opaque 11-character [A-Za-z0-9] tokens. Tokens are a
// bijective scramble of a counter, so they never repeat within a source and
// a fixed seed gives a fixed sequence.
class IdSource {
 public:
  explicit IdSource(std::uint64_t seed) : base_(seed * 0x9E3779B97F4A7C15ULL) {}

  static IdSource from_entropy() {
    std::random_device rd;
    return IdSource((std::uint64_t{rd()} << 32) ^ rd());
  }

  TaskId next() {
    std::uint64_t x = base_ + counter_++;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    x ^= x >> 31;
    static constexpr char kAlphabet[] =
        "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    TaskId id(11, '0');
    for (int i = 10; i >= 0; --i) {
      id[i] = kAlphabet[x % 62];
      x /= 62;
    }
    return id;
  }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

struct CollectorOptions {
  std::size_t batch_size = 4096;
  std::size_t queue_capacity = 4 * 4096;
  // Strict sessions enforce request containment at receive_response.
  ValidationMode mode = ValidationMode::kStrict;
  std::optional<std::uint64_t> seed;
};

struct FlushStats {
  std::size_t records_written = 0;
  std::size_t dropped_count = 0;
};

// The instrumentation surface a simulator calls. Seven functions: begin/end
// for generic tasks, four for the Request Out / Request In lifecycle, and
// flush. Thread-safe; a background writer drains completed records.
class CollectorSession {
 public:
  explicit CollectorSession(std::shared_ptr<RecordSink> sink, CollectorOptions options = {})
      : sink_(std::move(sink)),
        options_(options),
        ids_(options.seed ? IdSource(*options.seed) : IdSource::from_entropy()),
        writer_([this] { writer_loop(); }) {}

  static std::unique_ptr<CollectorSession> to_file(const std::string& path,
                                                   CollectorOptions options = {}) {
    return std::make_unique<CollectorSession>(std::make_unique<FileSink>(path), options);
  }

  // Uses DAISEN_TRACE_PATH as the file sink.
  static std::unique_ptr<CollectorSession> from_environment(CollectorOptions options = {}) {
    const char* path = std::getenv("DAISEN_TRACE_PATH");
    if (!path || !*path) throw Error(ErrorCode::kIo, "DAISEN_TRACE_PATH is not set");
    return to_file(path, options);
  }

  CollectorSession(const CollectorSession&) = delete;
  CollectorSession& operator=(const CollectorSession&) = delete;

  ~CollectorSession() {
    try {
      close();
    } catch (...) {
    }
  }

  TaskId begin_task(const std::optional<TaskId>& parent_id, std::string category,
                    std::string action, std::string location, double time,
                    Details details = {}) {
    check_time(time);
    Task t;
    t.parent_id = parent_id;
    t.category = std::move(category);
    t.action = std::move(action);
    t.location = std::move(location);
    t.start = time;
    t.details = std::move(details);
    std::lock_guard lock(state_mu_);
    ensure_open();
    return open_locked(std::move(t));
  }

  void end_task(const TaskId& id, double time) {
    std::lock_guard lock(state_mu_);
    ensure_open();
    auto it = find_open(id, std::nullopt);
    finish_locked(it, time);
  }

  TaskId initiate_request(const std::optional<TaskId>& parent_id, std::string action,
                          std::string source_location, double time) {
    return begin_task(parent_id, std::string(kRequestOutCategory), std::move(action),
                      std::move(source_location), time);
  }

  TaskId receive_request(const TaskId& request_out_id, std::string dest_location, double time) {
    check_time(time);
    std::lock_guard lock(state_mu_);
    ensure_open();
    auto it = find_open(request_out_id, TaskKind::kRequestOut);
    OpenTask& out = it->second;
    if (dest_location == out.task.location)
      throw Error(ErrorCode::kSameLocation,
                  "request cannot be received at its source '" + dest_location + "'");
    if (time < out.task.start)
      throw Error(ErrorCode::kTimeOrder, "request received before it was initiated");
    Task t;
    t.parent_id = request_out_id;
    t.category = std::string(kRequestInCategory);
    t.action = out.task.action;
    t.location = std::move(dest_location);
    t.start = time;
    ++out.open_children;
    return open_locked(std::move(t));
  }

  void complete_request(const TaskId& request_in_id, double time) {
    std::lock_guard lock(state_mu_);
    ensure_open();
    auto it = find_open(request_in_id, TaskKind::kRequestIn);
    finish_locked(it, time);
  }

  void receive_response(const TaskId& request_out_id, double time) {
    std::lock_guard lock(state_mu_);
    ensure_open();
    auto it = find_open(request_out_id, TaskKind::kRequestOut);
    if (options_.mode == ValidationMode::kStrict) {
      if (it->second.open_children > 0)
        throw Error(ErrorCode::kChildOpen, "request '" + request_out_id + "' still has an open Request In");
      if (time < it->second.max_child_end)
        throw Error(ErrorCode::kTimeOrder, "response arrives before the Request In completed");
    }
    finish_locked(it, time);
  }

  // Drains completed records to the sink and syncs it. Open tasks stay open.
  FlushStats flush() {
    std::unique_lock lock(queue_mu_);
    const std::uint64_t target = enqueued_;
    flush_requested_ = true;
    queue_cv_.notify_all();
    drained_cv_.wait(lock, [&] { return written_ >= target || writer_error_; });
    flush_requested_ = false;
    rethrow_writer_error();
    try {
      sink_->sync();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kIo, e.what());
    }
    FlushStats stats{static_cast<std::size_t>(written_ - reported_), dropped_};
    reported_ = written_;
    return stats;
  }

  // Flushes and stops the writer. Later task calls fail with E_SESSION_CLOSED.
  void close() {
    {
      std::lock_guard lock(state_mu_);
      if (closed_) return;
      closed_ = true;
    }
    std::exception_ptr failure;
    try {
      flush();
    } catch (...) {
      failure = std::current_exception();
    }
    {
      std::lock_guard lock(queue_mu_);
      stopping_ = true;
    }
    queue_cv_.notify_all();
    if (writer_.joinable()) writer_.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::size_t open_count() const {
    std::lock_guard lock(state_mu_);
    return open_.size();
  }

  std::size_t completed_count() const {
    std::lock_guard lock(state_mu_);
    return completed_;
  }

 private:
  struct OpenTask {
    Task task;
    std::size_t open_children = 0;
    double max_child_end = -kOpenEnd;
  };
  using OpenMap = std::unordered_map<TaskId, OpenTask>;

  static void check_time(double time) {
    if (!std::isfinite(time) || time < 0.0)
      throw Error(ErrorCode::kBadParam, "time must be finite and non-negative");
  }

  void ensure_open() const {
    if (closed_) throw Error(ErrorCode::kSessionClosed, "collector session is closed");
  }

  OpenMap::iterator find_open(const TaskId& id, std::optional<TaskKind> kind) {
    auto it = open_.find(id);
    if (it == open_.end() || (kind && it->second.task.kind() != *kind))
      throw Error(ErrorCode::kUnknownId, "no matching open task '" + id + "'");
    return it;
  }

  TaskId open_locked(Task task) {
    task.id = ids_.next();
    TaskId id = task.id;
    open_.emplace(id, OpenTask{std::move(task)});
    return id;
  }

  void finish_locked(OpenMap::iterator it, double time) {
    Task& task = it->second.task;
    if (!std::isfinite(time) || time < task.start)
      throw Error(ErrorCode::kTimeOrder, "task '" + task.id + "' cannot end before it starts");
    task.end = time;
    if (task.kind() == TaskKind::kRequestIn && task.parent_id) {
      if (auto p = open_.find(*task.parent_id); p != open_.end()) {
        if (p->second.open_children > 0) --p->second.open_children;
        p->second.max_child_end = std::max(p->second.max_child_end, time);
      }
    }
    Task done = std::move(task);
    open_.erase(it);
    ++completed_;
    enqueue(std::move(done));
  }

  // Called with state_mu_ held; blocks while the queue is full so records
  // are never dropped.
  void enqueue(Task task) {
    std::unique_lock lock(queue_mu_);
    space_cv_.wait(lock, [&] { return queue_.size() < options_.queue_capacity || writer_error_; });
    rethrow_writer_error();
    queue_.push_back(std::move(task));
    ++enqueued_;
    if (queue_.size() >= options_.batch_size) queue_cv_.notify_one();
  }

  void rethrow_writer_error() {
    if (!writer_error_) return;
    try {
      std::rethrow_exception(writer_error_);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kIo, e.what());
    }
  }

  void writer_loop() {
    std::vector<Task> batch;
    std::unique_lock lock(queue_mu_);
    while (true) {
      queue_cv_.wait(lock, [&] {
        return stopping_ || queue_.size() >= options_.batch_size ||
               (flush_requested_ && !queue_.empty());
      });
      if (queue_.empty()) {
        if (stopping_) return;
        continue;
      }
      const std::size_t n = std::min(queue_.size(), options_.batch_size);
      batch.assign(std::make_move_iterator(queue_.begin()),
                   std::make_move_iterator(queue_.begin() + static_cast<std::ptrdiff_t>(n)));
      queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(n));
      space_cv_.notify_all();
      lock.unlock();
      std::exception_ptr error;
      try {
        sink_->write(batch);
      } catch (...) {
        error = std::current_exception();
      }
      lock.lock();
      if (error) {
        writer_error_ = error;
        space_cv_.notify_all();
        drained_cv_.notify_all();
        return;
      }
      written_ += n;
      drained_cv_.notify_all();
    }
  }

  std::shared_ptr<RecordSink> sink_;
  CollectorOptions options_;

  mutable std::mutex state_mu_;
  IdSource ids_;
  OpenMap open_;
  std::size_t completed_ = 0;
  bool closed_ = false;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable space_cv_;
  std::condition_variable drained_cv_;
  std::deque<Task> queue_;
  std::uint64_t enqueued_ = 0;
  std::uint64_t written_ = 0;
  std::uint64_t reported_ = 0;
  std::size_t dropped_ = 0;
  bool flush_requested_ = false;
  bool stopping_ = false;
  std::exception_ptr writer_error_;

  std::thread writer_;  // declared last: starts after every member above exists
};

}  // namespace daisen

#endif  // DAISEN_COLLECTOR_HPP
