#ifndef DAISEN_TRACE_STORE_HPP
#define DAISEN_TRACE_STORE_HPP

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daisen/collector.hpp"
#include "daisen/error.hpp"
#include "daisen/jsonl.hpp"
#include "daisen/trace_model.hpp"

namespace daisen {

struct TraceMeta {
  std::size_t task_count = 0;
  double time_min = 0.0;
  double time_max = 0.0;
  std::size_t component_count = 0;
  std::string format_version{jsonl::kFormatVersion};
};

struct ComponentInfo {
  std::string name;
  std::size_t task_count = 0;
  double first_start = 0.0;
  double last_end = 0.0;
};

// Numeric-aware ordering: "CU2" < "CU10". Digit runs compare by value, the
// rest bytewise; full-string order breaks remaining ties.
inline bool natural_less(std::string_view a, std::string_view b) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      std::string_view da = a.substr(i, ie - i), db = b.substr(j, je - j);
      da.remove_prefix(std::min(da.find_first_not_of('0'), da.size()));
      db.remove_prefix(std::min(db.find_first_not_of('0'), db.size()));
      if (da.size() != db.size()) return da.size() < db.size();
      if (da != db) return da < db;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return static_cast<unsigned char>(a[i]) < static_cast<unsigned char>(b[j]);
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

namespace store {

inline constexpr std::uint32_t kNone = 0xFFFFFFFFu;
inline constexpr std::size_t kTargetBuckets = 4096;
inline constexpr double kMinBucketWidth = 1e-9;
inline constexpr char kIndexMagic[8] = {'D', 'T', 'I', 'D', 'X', 0, 0, 0};
inline constexpr std::uint32_t kIndexVersion = 1;

// Columnar form of one task. Row position in the snapshot equals its rank in
// (start, id) order.
struct TaskRow {
  std::uint32_t parent = kNone;
  std::uint32_t category = 0;
  std::uint32_t action = 0;
  std::uint32_t location = 0;
  double start = 0.0;
  double end = 0.0;
  std::uint64_t offset = 0;  // byte offset of the record in the log
  std::uint32_t length = 0;  // record length in bytes, without newline
};

// Per-location time-bucket index in CSR form.
struct LocationIndex {
  std::vector<std::uint32_t> members;  // row indices, ascending
  std::vector<std::uint32_t> bucket_offsets;
  std::vector<std::uint32_t> bucket_entries;
};

// Read-only handle to the record log. pread keeps concurrent reads safe.
class LogFile {
 public:
  explicit LogFile(const std::string& path) : path_(path), fd_(::open(path.c_str(), O_RDONLY)) {
    if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open log '" + path + "'");
  }
  ~LogFile() { ::close(fd_); }
  LogFile(const LogFile&) = delete;
  LogFile& operator=(const LogFile&) = delete;

  std::string read(std::uint64_t offset, std::uint32_t length) const {
    std::string buf(length, '\0');
    std::size_t done = 0;
    while (done < length) {
      ssize_t got = ::pread(fd_, buf.data() + done, length - done,
                            static_cast<off_t>(offset + done));
      if (got <= 0) throw Error(ErrorCode::kIo, "short read from '" + path_ + "'");
      done += static_cast<std::size_t>(got);
    }
    return buf;
  }

 private:
  std::string path_;
  int fd_;
};

// An immutable, fully indexed corpus. Published atomically by TraceStore.
struct Snapshot {
  std::vector<std::string> ids;
  std::vector<TaskRow> rows;
  std::unordered_map<std::string_view, std::uint32_t> by_id;

  std::vector<std::string> categories;
  std::vector<TaskKind> category_kinds;
  std::vector<std::string> actions;
  std::vector<std::string> locations;
  std::unordered_map<std::string_view, std::uint32_t> location_by_name;

  std::vector<std::uint32_t> child_offsets;
  std::vector<std::uint32_t> child_list;

  double bucket_origin = 0.0;
  double bucket_width = kMinBucketWidth;
  std::uint32_t bucket_count = 1;
  std::vector<LocationIndex> location_index;

  std::vector<ComponentInfo> components;  // natural name order
  std::vector<std::pair<std::uint32_t, std::uint32_t>> category_action_pairs;
  TraceMeta meta;

  std::shared_ptr<LogFile> log;   // file-backed stores
  std::vector<Task> inline_tasks;  // in-memory stores, indexed by row

  TaskKind kind(std::uint32_t row) const { return category_kinds[rows[row].category]; }

  std::optional<std::uint32_t> find(std::string_view id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> find_location(std::string_view name) const {
    auto it = location_by_name.find(name);
    if (it == location_by_name.end()) return std::nullopt;
    return it->second;
  }

  std::span<const std::uint32_t> children_of(std::uint32_t row) const {
    return {child_list.data() + child_offsets[row], child_list.data() + child_offsets[row + 1]};
  }

  std::uint32_t first_bucket(double t) const {
    const double x = (t - bucket_origin) / bucket_width;
    if (!(x > 0.0)) return 0;
    if (x >= static_cast<double>(bucket_count - 1)) return bucket_count - 1;
    return static_cast<std::uint32_t>(x);
  }

  std::uint32_t last_bucket(double start, double end) const {
    const std::uint32_t first = first_bucket(start);
    if (end <= start) return first;
    const double x = std::ceil((end - bucket_origin) / bucket_width) - 1.0;
    if (!(x > first)) return first;
    if (x >= static_cast<double>(bucket_count - 1)) return bucket_count - 1;
    return static_cast<std::uint32_t>(x);
  }

  // Visits, once each, every row at `location` whose bucket span touches
  // [t0, t1) widened by one bucket either side. Callers filter exactly.
  template <class Fn>
  void visit_candidates(std::uint32_t location, double t0, double t1, Fn&& fn) const {
    const LocationIndex& li = location_index[location];
    const std::uint32_t b0 = first_bucket(t0) == 0 ? 0 : first_bucket(t0) - 1;
    const std::uint32_t b1 = std::min(first_bucket(t1) + 1, bucket_count - 1);
    for (std::uint32_t b = b0; b <= b1; ++b) {
      for (std::uint32_t k = li.bucket_offsets[b]; k < li.bucket_offsets[b + 1]; ++k) {
        const std::uint32_t row = li.bucket_entries[k];
        if (std::max(first_bucket(rows[row].start), b0) != b) continue;
        fn(row);
      }
    }
  }

  // Rows at `location` overlapping [t0, t1) under the half-open rule, in
  // (start, id) order.
  std::vector<std::uint32_t> window_rows(std::uint32_t location, double t0, double t1) const {
    std::vector<std::uint32_t> out;
    visit_candidates(location, t0, t1, [&](std::uint32_t row) {
      if (overlaps(rows[row].start, rows[row].end, t0, t1)) out.push_back(row);
    });
    std::sort(out.begin(), out.end());
    return out;
  }

  Task task(std::uint32_t row) const {
    if (!inline_tasks.empty()) return inline_tasks[row];
    const TaskRow& r = rows[row];
    return jsonl::decode(log->read(r.offset, r.length));
  }

  std::vector<Task> tasks(std::span<const std::uint32_t> selected) const {
    std::vector<Task> out;
    out.reserve(selected.size());
    for (std::uint32_t row : selected) out.push_back(task(row));
    return out;
  }
};

namespace detail {

class Interner {
 public:
  std::uint32_t intern(const std::string& s) {
    auto [it, inserted] = index_.try_emplace(s, static_cast<std::uint32_t>(values_.size()));
    if (inserted) values_.push_back(s);
    return it->second;
  }
  std::vector<std::string> take() { return std::move(values_); }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> values_;
};

inline void rebuild_lookups(Snapshot& s) {
  s.by_id.clear();
  s.by_id.reserve(s.ids.size());
  for (std::uint32_t i = 0; i < s.ids.size(); ++i) s.by_id.emplace(s.ids[i], i);
  s.location_by_name.clear();
  for (std::uint32_t i = 0; i < s.locations.size(); ++i) s.location_by_name.emplace(s.locations[i], i);
  s.category_kinds.clear();
  for (const auto& c : s.categories) s.category_kinds.push_back(classify_kind(c));
}

// Derives meta, the component roster and the colour-key pairs from rows.
inline void derive_summaries(Snapshot& s) {
  s.meta = TraceMeta{};
  s.meta.task_count = s.rows.size();
  s.components.assign(s.locations.size(), ComponentInfo{});
  std::vector<std::uint8_t> seen_pair;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  bool first = true;
  for (const TaskRow& r : s.rows) {
    if (first) {
      s.meta.time_min = r.start;
      s.meta.time_max = r.end;
      first = false;
    }
    s.meta.time_min = std::min(s.meta.time_min, r.start);
    s.meta.time_max = std::max(s.meta.time_max, r.end);
    ComponentInfo& c = s.components[r.location];
    if (c.task_count == 0) {
      c.first_start = r.start;
      c.last_end = r.end;
    }
    ++c.task_count;
    c.first_start = std::min(c.first_start, r.start);
    c.last_end = std::max(c.last_end, r.end);
    pairs.emplace_back(r.category, r.action);
  }
  for (std::uint32_t i = 0; i < s.locations.size(); ++i) s.components[i].name = s.locations[i];
  std::sort(s.components.begin(), s.components.end(),
            [](const ComponentInfo& a, const ComponentInfo& b) { return natural_less(a.name, b.name); });
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  s.category_action_pairs = std::move(pairs);
  s.meta.component_count = s.locations.size();
}

inline void build_buckets(Snapshot& s) {
  const double span = s.meta.time_max - s.meta.time_min;
  s.bucket_origin = s.meta.time_min;
  s.bucket_width = std::max(span / static_cast<double>(kTargetBuckets), kMinBucketWidth);
  const double count = std::floor(span / s.bucket_width) + 1.0;
  s.bucket_count = static_cast<std::uint32_t>(std::clamp(count, 1.0, double(kTargetBuckets + 1)));

  s.location_index.assign(s.locations.size(), LocationIndex{});
  for (std::uint32_t row = 0; row < s.rows.size(); ++row)
    s.location_index[s.rows[row].location].members.push_back(row);
  for (LocationIndex& li : s.location_index) {
    li.bucket_offsets.assign(s.bucket_count + 1, 0);
    for (std::uint32_t row : li.members) {
      const auto& r = s.rows[row];
      const std::uint32_t lo = s.first_bucket(r.start), hi = s.last_bucket(r.start, r.end);
      for (std::uint32_t b = lo; b <= hi; ++b) ++li.bucket_offsets[b + 1];
    }
    std::partial_sum(li.bucket_offsets.begin(), li.bucket_offsets.end(), li.bucket_offsets.begin());
    li.bucket_entries.resize(li.bucket_offsets.back());
    std::vector<std::uint32_t> fill(li.bucket_offsets.begin(), li.bucket_offsets.end() - 1);
    for (std::uint32_t row : li.members) {
      const auto& r = s.rows[row];
      const std::uint32_t lo = s.first_bucket(r.start), hi = s.last_bucket(r.start, r.end);
      for (std::uint32_t b = lo; b <= hi; ++b) li.bucket_entries[fill[b]++] = row;
    }
  }
}

// Builds a snapshot from validated records. `offsets`/`lengths` locate each
// record in the log (ignored for in-memory snapshots).
inline std::shared_ptr<Snapshot> build_snapshot(std::vector<Task> tasks,
                                                std::span<const std::uint64_t> offsets,
                                                std::span<const std::uint32_t> lengths,
                                                std::shared_ptr<LogFile> log) {
  auto snap = std::make_shared<Snapshot>();
  Snapshot& s = *snap;
  const std::size_t n = tasks.size();
  if (n >= kNone) throw Error(ErrorCode::kBadParam, "trace too large for one store");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return start_id_less(tasks[a], tasks[b]); });

  Interner categories, actions, locations;
  s.ids.resize(n);
  s.rows.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Task& t = tasks[order[i]];
    s.ids[i] = t.id;
    TaskRow& r = s.rows[i];
    r.category = categories.intern(t.category);
    r.action = actions.intern(t.action);
    r.location = locations.intern(t.location);
    r.start = t.start;
    r.end = t.end;
    if (log) {
      r.offset = offsets[order[i]];
      r.length = lengths[order[i]];
    }
  }
  s.categories = categories.take();
  s.actions = actions.take();
  s.locations = locations.take();
  rebuild_lookups(s);

  for (std::uint32_t i = 0; i < n; ++i) {
    const Task& t = tasks[order[i]];
    if (t.parent_id) s.rows[i].parent = s.find(*t.parent_id).value_or(kNone);
  }
  s.child_offsets.assign(n + 1, 0);
  for (const TaskRow& r : s.rows)
    if (r.parent != kNone) ++s.child_offsets[r.parent + 1];
  std::partial_sum(s.child_offsets.begin(), s.child_offsets.end(), s.child_offsets.begin());
  s.child_list.resize(s.child_offsets.back());
  {
    std::vector<std::uint32_t> fill(s.child_offsets.begin(), s.child_offsets.end() - 1);
    for (std::uint32_t i = 0; i < n; ++i)
      if (s.rows[i].parent != kNone) s.child_list[fill[s.rows[i].parent]++] = i;
  }

  derive_summaries(s);
  build_buckets(s);

  s.log = std::move(log);
  if (!s.log) {
    s.inline_tasks.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) s.inline_tasks.push_back(std::move(tasks[order[i]]));
  }
  return snap;
}

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), file_(std::fopen(path.c_str(), "wb"), &std::fclose) {
    if (!file_) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  }
  void bytes(const void* p, std::size_t n) {
    if (n && std::fwrite(p, 1, n, file_.get()) != n)
      throw Error(ErrorCode::kIo, "short write to '" + path_ + "'");
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof v);
  }
  template <class T>
  void vec(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(T));
  }
  void strings(const std::vector<std::string>& v) {
    pod<std::uint64_t>(v.size());
    for (const auto& s : v) {
      pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
      bytes(s.data(), s.size());
    }
  }
  void finish() {
    if (std::fflush(file_.get()) != 0 || ::fsync(::fileno(file_.get())) != 0)
      throw Error(ErrorCode::kIo, "cannot sync '" + path_ + "'");
  }

 private:
  std::string path_;
  std::unique_ptr<std::FILE, decltype(&std::fclose)> file_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : file_(std::fopen(path.c_str(), "rb"), &std::fclose) {}
  bool ok() const { return file_ != nullptr && good_; }
  void bytes(void* p, std::size_t n) {
    if (good_ && n && std::fread(p, 1, n, file_.get()) != n) good_ = false;
  }
  template <class T>
  T pod() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  template <class T>
  std::vector<T> vec() {
    const auto n = pod<std::uint64_t>();
    if (!good_ || n > (1ULL << 34)) return good_ = false, std::vector<T>{};
    std::vector<T> v(n);
    bytes(v.data(), n * sizeof(T));
    return v;
  }
  std::vector<std::string> strings() {
    const auto n = pod<std::uint64_t>();
    if (!good_ || n > (1ULL << 32)) return good_ = false, std::vector<std::string>{};
    std::vector<std::string> v(n);
    for (auto& s : v) {
      s.resize(pod<std::uint32_t>());
      bytes(s.data(), s.size());
    }
    return v;
  }

 private:
  std::unique_ptr<std::FILE, decltype(&std::fclose)> file_;
  bool good_ = true;
};

// Identifies a log's content cheaply: size plus a hash of its head and tail.
inline std::pair<std::uint64_t, std::uint64_t> log_fingerprint(const std::string& path) {
  std::error_code ec;
  const std::uint64_t size = std::filesystem::file_size(path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat '" + path + "'");
  std::uint64_t hash = 1469598103934665603ULL;
  std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  char buf[4096];
  auto mix = [&](std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) hash = (hash ^ static_cast<unsigned char>(buf[i])) * 1099511628211ULL;
  };
  mix(std::fread(buf, 1, sizeof buf, f.get()));
  if (size > sizeof buf) {
    std::fseek(f.get(), static_cast<long>(size - sizeof buf), SEEK_SET);
    mix(std::fread(buf, 1, sizeof buf, f.get()));
  }
  return {size, hash};
}

inline void write_index(const Snapshot& s, const std::string& path, const std::string& log_path) {
  const auto [size, hash] = log_fingerprint(log_path);
  const std::string tmp = path + ".tmp";
  {
    BinaryWriter w(tmp);
    w.bytes(kIndexMagic, sizeof kIndexMagic);
    w.pod(kIndexVersion);
    w.pod(size);
    w.pod(hash);
    w.strings(s.ids);
    w.vec(s.rows);
    w.strings(s.categories);
    w.strings(s.actions);
    w.strings(s.locations);
    w.vec(s.child_offsets);
    w.vec(s.child_list);
    w.pod(s.bucket_origin);
    w.pod(s.bucket_width);
    w.pod(s.bucket_count);
    for (const LocationIndex& li : s.location_index) {
      w.vec(li.members);
      w.vec(li.bucket_offsets);
      w.vec(li.bucket_entries);
    }
    w.finish();
  }
  std::filesystem::rename(tmp, path);
}

// Loads the sidecar index if it exists and matches the log; nullptr otherwise.
inline std::shared_ptr<Snapshot> read_index(const std::string& path, const std::string& log_path) {
  if (!std::filesystem::exists(path)) return nullptr;
  BinaryReader r(path);
  if (!r.ok()) return nullptr;
  char magic[sizeof kIndexMagic];
  r.bytes(magic, sizeof magic);
  if (!r.ok() || std::memcmp(magic, kIndexMagic, sizeof magic) != 0) return nullptr;
  if (r.pod<std::uint32_t>() != kIndexVersion) return nullptr;
  const auto size = r.pod<std::uint64_t>();
  const auto hash = r.pod<std::uint64_t>();
  if (std::make_pair(size, hash) != log_fingerprint(log_path)) return nullptr;

  auto snap = std::make_shared<Snapshot>();
  Snapshot& s = *snap;
  s.ids = r.strings();
  s.rows = r.vec<TaskRow>();
  s.categories = r.strings();
  s.actions = r.strings();
  s.locations = r.strings();
  s.child_offsets = r.vec<std::uint32_t>();
  s.child_list = r.vec<std::uint32_t>();
  s.bucket_origin = r.pod<double>();
  s.bucket_width = r.pod<double>();
  s.bucket_count = r.pod<std::uint32_t>();
  s.location_index.resize(s.locations.size());
  for (LocationIndex& li : s.location_index) {
    li.members = r.vec<std::uint32_t>();
    li.bucket_offsets = r.vec<std::uint32_t>();
    li.bucket_entries = r.vec<std::uint32_t>();
    if (li.bucket_offsets.size() != s.bucket_count + 1u) return nullptr;
  }
  if (!r.ok() || s.ids.size() != s.rows.size() || s.child_offsets.size() != s.rows.size() + 1)
    return nullptr;
  rebuild_lookups(s);
  derive_summaries(s);
  s.log = std::make_shared<LogFile>(log_path);
  return snap;
}

}  // namespace detail
}  // namespace store

// Indexed storage for one trace corpus: time-window queries per location,
// identity lookups and task-tree navigation. File-backed stores keep the
// records in `<base>.dtrace` and a regenerable index in `<base>.dtidx`.
//
// Ingest builds a complete snapshot before publishing it, so readers see
// either the old corpus or the new one.
class TraceStore {
 public:
  // In-memory store.
  TraceStore() : snap_(empty_snapshot()) {}

  // File-backed store; loads existing content when the log exists.
  explicit TraceStore(std::filesystem::path base) : base_(std::move(base)), snap_(empty_snapshot()) {
    if (std::filesystem::exists(log_path())) load();
  }

  TraceStore(const TraceStore&) = delete;
  TraceStore& operator=(const TraceStore&) = delete;

  bool file_backed() const { return !base_.empty(); }
  std::string log_path() const { return base_.string() + ".dtrace"; }
  std::string index_path() const { return base_.string() + ".dtidx"; }

  // Validates and replaces the corpus. Aborts with E_VALIDATION on any error
  // finding; the previous corpus stays published.
  TraceMeta ingest(std::span<const Task> records, ValidationMode mode,
                   ValidationReport* report_out = nullptr) {
    std::lock_guard writer(ingest_mu_);
    check(records, mode, report_out);
    std::vector<Task> tasks(records.begin(), records.end());
    if (!file_backed()) {
      publish(store::detail::build_snapshot(std::move(tasks), {}, {}, nullptr));
      return meta();
    }
    const std::string tmp = log_path() + ".tmp";
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint32_t> lengths;
    {
      std::string chunk;
      for (Task& t : tasks) {
        const std::string line = jsonl::encode(t);
        offsets.push_back(chunk.size());
        lengths.push_back(static_cast<std::uint32_t>(line.size()));
        chunk += line;
        chunk += '\n';
        t.details.clear();
      }
      write_durably(tmp, chunk);
    }
    std::filesystem::rename(tmp, log_path());
    commit(std::move(tasks), offsets, lengths);
    return meta();
  }

  // Ingests a daisen-jsonl v1 file. File-backed stores adopt a copy of the
  // file as their log.
  TraceMeta ingest_file(const std::string& path, ValidationMode mode,
                        ValidationReport* report_out = nullptr,
                        std::vector<std::string>* warnings = nullptr) {
    std::lock_guard writer(ingest_mu_);
    std::vector<Task> tasks;
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint32_t> lengths;
    {
      jsonl::Reader reader(path);
      Task t;
      std::uint64_t off = 0;
      std::uint32_t len = 0;
      while (reader.next(t, &off, warnings, &len)) {
        offsets.push_back(off);
        lengths.push_back(len);
        if (file_backed()) t.details.clear();
        tasks.push_back(std::move(t));
      }
    }
    check(tasks, mode, report_out);
    if (!file_backed()) {
      publish(store::detail::build_snapshot(std::move(tasks), {}, {}, nullptr));
      return meta();
    }
    const std::string tmp = log_path() + ".tmp";
    std::filesystem::copy_file(path, tmp, std::filesystem::copy_options::overwrite_existing);
    std::filesystem::rename(tmp, log_path());
    commit(std::move(tasks), offsets, lengths);
    return meta();
  }

  // Re-reads the log, using the sidecar index when it is current.
  void load() {
    std::lock_guard writer(ingest_mu_);
    if (!file_backed()) return;
    if (auto snap = store::detail::read_index(index_path(), log_path())) {
      publish(std::move(snap));
      return;
    }
    std::vector<Task> tasks;
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint32_t> lengths;
    jsonl::Reader reader(log_path());
    Task t;
    std::uint64_t off = 0;
    std::uint32_t len = 0;
    while (reader.next(t, &off, nullptr, &len)) {
      offsets.push_back(off);
      lengths.push_back(len);
      t.details.clear();
      tasks.push_back(std::move(t));
    }
    commit(std::move(tasks), offsets, lengths);
  }

  std::shared_ptr<const store::Snapshot> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
  }

  TraceMeta meta() const { return snapshot()->meta; }

  std::vector<ComponentInfo> components() const { return snapshot()->components; }

  std::vector<Task> query_window(std::string_view location, double t0, double t1) const {
    if (!(t0 <= t1)) throw Error(ErrorCode::kBadRange, "window start exceeds end");
    auto snap = snapshot();
    auto loc = snap->find_location(location);
    if (!loc) return {};
    return snap->tasks(snap->window_rows(*loc, t0, t1));
  }

  Task get_task(std::string_view id) const {
    auto snap = snapshot();
    return snap->task(require(*snap, id));
  }

  std::vector<Task> children(std::string_view id) const {
    auto snap = snapshot();
    return snap->tasks(snap->children_of(require(*snap, id)));
  }

  // The task followed by its ancestors, ending at a parentless task (or one
  // whose parent is not in the corpus).
  std::vector<Task> parent_chain(std::string_view id) const {
    auto snap = snapshot();
    std::vector<std::uint32_t> chain{require(*snap, id)};
    while (snap->rows[chain.back()].parent != store::kNone) {
      if (chain.size() > snap->rows.size())
        throw Error(ErrorCode::kCycle, "parent chain of '" + std::string(id) + "' loops");
      chain.push_back(snap->rows[chain.back()].parent);
    }
    return snap->tasks(chain);
  }

  struct ComponentPage {
    std::size_t total = 0;
    std::vector<ComponentInfo> items;
  };

  // Unanchored regex search over component names, natural order, paged.
  ComponentPage list_components(const std::string& filter, std::size_t page,
                                std::size_t page_size) const {
    if (page_size < 1) throw Error(ErrorCode::kBadParam, "page_size must be at least 1");
    std::regex re;
    try {
      re = std::regex(filter, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kBadRegex, "invalid filter '" + filter + "': " + e.what());
    }
    ComponentPage out;
    auto snap = snapshot();
    const std::size_t begin = page * page_size;
    for (const ComponentInfo& c : snap->components) {
      if (!std::regex_search(c.name, re)) continue;
      if (out.total >= begin && out.total < begin + page_size) out.items.push_back(c);
      ++out.total;
    }
    return out;
  }

 private:
  static std::shared_ptr<const store::Snapshot> empty_snapshot() {
    return store::detail::build_snapshot({}, {}, {}, nullptr);
  }

  static std::uint32_t require(const store::Snapshot& snap, std::string_view id) {
    auto row = snap.find(id);
    if (!row) throw Error(ErrorCode::kUnknownId, "no task '" + std::string(id) + "'");
    return *row;
  }

  static void check(std::span<const Task> tasks, ValidationMode mode, ValidationReport* out) {
    ValidationReport report = validate_trace(tasks, mode);
    const bool ok = report.ok();
    const std::string summary = ok ? std::string()
                                   : report.errors.front().code + " on '" +
                                         report.errors.front().task_id + "': " +
                                         report.errors.front().message;
    const std::size_t n_errors = report.errors.size();
    if (out) *out = std::move(report);
    if (!ok)
      throw Error(ErrorCode::kValidation,
                  std::to_string(n_errors) + " validation error(s); first: " + summary);
  }

  static void write_durably(const std::string& path, const std::string& bytes) {
    std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f || std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size() ||
        std::fflush(f.get()) != 0 || ::fsync(::fileno(f.get())) != 0)
      throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  }

  void commit(std::vector<Task> tasks, std::span<const std::uint64_t> offsets,
              std::span<const std::uint32_t> lengths) {
    auto log = std::make_shared<store::LogFile>(log_path());
    auto snap = store::detail::build_snapshot(std::move(tasks), offsets, lengths, std::move(log));
    store::detail::write_index(*snap, index_path(), log_path());
    publish(std::move(snap));
  }

  void publish(std::shared_ptr<const store::Snapshot> snap) {
    std::lock_guard lock(snap_mu_);
    snap_ = std::move(snap);
  }

  std::filesystem::path base_;
  std::mutex ingest_mu_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const store::Snapshot> snap_;
};

// Collector sink that publishes into a live store. Each sync re-ingests the
// records received so far in lenient mode, since parents of flushed records
// may still be open.
class StoreSink final : public RecordSink {
 public:
  explicit StoreSink(TraceStore& store) : store_(store) {}

  void write(std::span<const Task> batch) override {
    records_.insert(records_.end(), batch.begin(), batch.end());
  }

  void sync() override { store_.ingest(records_, ValidationMode::kLenient); }

 private:
  TraceStore& store_;
  std::vector<Task> records_;
};

}  // namespace daisen

#endif  // DAISEN_TRACE_STORE_HPP
