#ifndef DAISEN_TRACE_MODEL_HPP
#define DAISEN_TRACE_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace daisen {

using TaskId = std::string;
using Details = std::map<std::string, std::string>;

// End time of a task that has begun but not yet ended.
inline constexpr double kOpenEnd = std::numeric_limits<double>::infinity();

inline constexpr std::string_view kRequestInCategory = "Request In";
inline constexpr std::string_view kRequestOutCategory = "Request Out";

enum class TaskKind { kRequestIn, kRequestOut, kOther };

inline TaskKind classify_kind(std::string_view category) {
  if (category == kRequestInCategory) return TaskKind::kRequestIn;
  if (category == kRequestOutCategory) return TaskKind::kRequestOut;
  return TaskKind::kOther;
}

// One record of hardware work. Intervals are half-open: [start, end).
struct Task {
  TaskId id;
  std::optional<TaskId> parent_id;
  std::string category;
  std::string action;
  std::string location;
  double start = 0.0;
  double end = kOpenEnd;
  Details details;

  bool is_open() const { return std::isinf(end); }
  double duration() const { return end - start; }
  TaskKind kind() const { return classify_kind(category); }

  bool operator==(const Task&) const = default;
};

// Half-open overlap test. A zero-duration task at t overlaps [t0, t1) iff
// t0 <= t < t1.
inline bool overlaps(double start, double end, double t0, double t1) {
  if (start == end) return t0 <= start && start < t1;
  return start < t1 && end > t0;
}

// Sort order used for every task listing: (start, id).
inline bool start_id_less(const Task& a, const Task& b) {
  return std::tie(a.start, a.id) < std::tie(b.start, b.id);
}

enum class ValidationMode { kStrict, kLenient };

struct Finding {
  TaskId task_id;
  std::string code;
  std::string message;

  auto operator<=>(const Finding&) const = default;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;

  bool ok() const { return errors.empty(); }
  bool empty() const { return errors.empty() && warnings.empty(); }

  void merge(ValidationReport other) {
    errors.insert(errors.end(), std::make_move_iterator(other.errors.begin()),
                  std::make_move_iterator(other.errors.end()));
    warnings.insert(warnings.end(), std::make_move_iterator(other.warnings.begin()),
                    std::make_move_iterator(other.warnings.end()));
  }

  void sort() {
    std::sort(errors.begin(), errors.end());
    std::sort(warnings.begin(), warnings.end());
  }
};

namespace detail {

inline void report(ValidationReport& out, bool as_error, const TaskId& id,
                   std::string code, std::string message) {
  auto& list = as_error ? out.errors : out.warnings;
  list.push_back({id, std::move(code), std::move(message)});
}

}  // namespace detail

// Per-record checks that need no other task.
inline ValidationReport validate_task(const Task& task, ValidationMode mode) {
  const bool strict = mode == ValidationMode::kStrict;
  ValidationReport out;
  if (task.id.empty()) detail::report(out, true, task.id, "E_NO_ID", "task id is empty");
  if (task.location.empty())
    detail::report(out, true, task.id, "E_NO_LOCATION", "task has no location");
  if (task.category.empty())
    detail::report(out, strict, task.id, "E_NO_CATEGORY", "task has no category");
  if (task.action.empty())
    detail::report(out, strict, task.id, "E_NO_ACTION", "task has no action");
  if (!std::isfinite(task.start) || task.start < 0.0)
    detail::report(out, true, task.id, "E_BAD_TIME", "start must be a finite non-negative time");
  if (task.is_open())
    detail::report(out, true, task.id, "E_OPEN_TASK", "task has no end time");
  else if (std::isnan(task.end) || task.end < task.start)
    detail::report(out, true, task.id, "E_TIME_ORDER", "end precedes start");
  return out;
}

// Whole-corpus checks: identity, parent links, request pairing, cycles and
// the single-root rule. Findings are sorted, so the result does not depend on
// the input order.
inline ValidationReport validate_trace(std::span<const Task> tasks, ValidationMode mode) {
  const bool strict = mode == ValidationMode::kStrict;
  ValidationReport out;

  std::unordered_map<std::string_view, std::vector<std::size_t>> by_id;
  by_id.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out.merge(validate_task(tasks[i], mode));
    by_id[tasks[i].id].push_back(i);
  }
  for (const auto& [id, where] : by_id) {
    if (where.size() > 1)
      detail::report(out, true, std::string(id), "E_DUP_ID",
                     "id appears " + std::to_string(where.size()) + " times");
  }

  // Index of the unique task carrying `id`, if exactly one does.
  auto unique_index = [&](std::string_view id) -> std::optional<std::size_t> {
    auto it = by_id.find(id);
    if (it == by_id.end() || it->second.size() != 1) return std::nullopt;
    return it->second.front();
  };

  std::size_t roots = 0;
  for (const Task& task : tasks) {
    if (!task.parent_id) {
      ++roots;
      continue;
    }
    const TaskId& pid = *task.parent_id;
    auto it = by_id.find(pid);
    if (it == by_id.end()) {
      detail::report(out, strict, task.id, "E_UNKNOWN_PARENT", "parent '" + pid + "' not in trace");
      continue;
    }
    if (it->second.size() != 1) continue;  // ambiguous parent, reported as E_DUP_ID
    const Task& parent = tasks[it->second.front()];
    if (task.kind() != TaskKind::kRequestIn) continue;
    if (parent.kind() != TaskKind::kRequestOut)
      detail::report(out, true, task.id, "E_REQIN_PARENT",
                     "Request In parent '" + pid + "' is not a Request Out");
    if (parent.location == task.location)
      detail::report(out, true, task.id, "E_SAME_LOCATION",
                     "Request In shares location '" + task.location + "' with its Request Out");
    if (!(parent.start <= task.start && task.end <= parent.end))
      detail::report(out, strict, task.id, "E_NOT_CONTAINED",
                     "Request In interval is not inside its Request Out");
  }

  if (strict && !tasks.empty() && roots != 1)
    detail::report(out, true, "", "E_ROOT_COUNT",
                   "expected exactly one parentless task, found " + std::to_string(roots));
  else if (!strict && roots > 1)
    detail::report(out, false, "", "E_ROOT_COUNT",
                   std::to_string(roots) + " parentless tasks");

  // Cycle detection over tasks with unique ids: 0 = unvisited, 1 = on the
  // current walk, 2 = resolved.
  std::vector<std::uint8_t> state(tasks.size(), 0);
  std::vector<bool> cyclic(tasks.size(), false);
  std::vector<std::size_t> walk;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (state[i] != 0 || !unique_index(tasks[i].id)) continue;
    walk.clear();
    std::optional<std::size_t> cur = i;
    while (cur && state[*cur] == 0) {
      state[*cur] = 1;
      walk.push_back(*cur);
      const Task& t = tasks[*cur];
      cur = t.parent_id ? unique_index(*t.parent_id) : std::nullopt;
    }
    if (cur && state[*cur] == 1) {
      auto pos = std::find(walk.begin(), walk.end(), *cur);
      for (; pos != walk.end(); ++pos) cyclic[*pos] = true;
    }
    for (std::size_t w : walk) state[w] = 2;
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (cyclic[i])
      detail::report(out, true, tasks[i].id, "E_CYCLE", "parent chain loops back to this task");
  }

  out.sort();
  return out;
}

}  // namespace daisen

#endif  // DAISEN_TRACE_MODEL_HPP
