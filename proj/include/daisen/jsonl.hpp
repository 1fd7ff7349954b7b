#ifndef DAISEN_JSONL_HPP
#define DAISEN_JSONL_HPP

// daisen-jsonl v1: one JSON object per line with the keys
// id, parent_id, kind, what, where, start, end, detail.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "daisen/error.hpp"
#include "daisen/trace_model.hpp"

namespace daisen::jsonl {

inline constexpr std::string_view kFormatVersion = "daisen-jsonl v1";

inline std::string encode(const Task& task) {
  if (task.is_open())
    throw Error(ErrorCode::kBadParam, "cannot encode open task '" + task.id + "'");
  nlohmann::ordered_json j;
  j["id"] = task.id;
  if (task.parent_id)
    j["parent_id"] = *task.parent_id;
  else
    j["parent_id"] = nullptr;
  j["kind"] = task.category;
  j["what"] = task.action;
  j["where"] = task.location;
  j["start"] = task.start;
  j["end"] = task.end;
  if (!task.details.empty()) {
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [k, v] : task.details) d[k] = v;
    j["detail"] = std::move(d);
  }
  return j.dump();
}

namespace detail {

inline std::string text_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorCode::kParse, std::string("field '") + key + "' must be text");
  return it->get<std::string>();
}

inline double time_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw Error(ErrorCode::kParse, std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

}  // namespace detail

// Parses one record. Unknown keys and non-text detail values are accepted and
// reported through `warnings`.
inline Task decode(std::string_view line, std::vector<std::string>* warnings = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParse, "record is not a JSON object");

  Task task;
  task.id = detail::text_field(j, "id");
  if (auto it = j.find("parent_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::kParse, "field 'parent_id' must be text");
    task.parent_id = it->get<std::string>();
  }
  task.category = detail::text_field(j, "kind");
  task.action = detail::text_field(j, "what");
  task.location = detail::text_field(j, "where");
  task.start = detail::time_field(j, "start");
  task.end = detail::time_field(j, "end");
  if (auto it = j.find("detail"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorCode::kParse, "field 'detail' must be an object");
    for (const auto& [k, v] : it->items()) {
      if (v.is_string()) {
        task.details.emplace(k, v.get<std::string>());
      } else {
        task.details.emplace(k, v.dump());
        if (warnings) warnings->push_back("task '" + task.id + "': detail '" + k + "' stored as text");
      }
    }
  }
  if (warnings) {
    static constexpr std::string_view kKnown[] = {"id",    "parent_id", "kind", "what",
                                                  "where", "start",     "end",  "detail"};
    for (const auto& [k, v] : j.items()) {
      if (std::find(std::begin(kKnown), std::end(kKnown), k) == std::end(kKnown))
        warnings->push_back("task '" + task.id + "': unknown key '" + k + "' ignored");
    }
  }
  return task;
}

// Sequential reader that also reports the byte offset of each record.
class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  }

  // `offset` and `length` locate the record's bytes, excluding the newline.
  bool next(Task& task, std::uint64_t* offset = nullptr,
            std::vector<std::string>* warnings = nullptr, std::uint32_t* length = nullptr) {
    while (true) {
      const std::uint64_t pos = pos_;
      if (!std::getline(in_, line_)) {
        if (in_.bad()) throw Error(ErrorCode::kIo, "read failure on '" + path_ + "'");
        return false;
      }
      pos_ += line_.size() + 1;
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        task = decode(line_, warnings);
      } catch (const Error& e) {
        throw Error(e.code(), path_ + ":" + std::to_string(line_no_) + ": " + e.message());
      }
      if (offset) *offset = pos;
      if (length) *length = static_cast<std::uint32_t>(line_.size());
      return true;
    }
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::string line_;
  std::size_t line_no_ = 0;
  std::uint64_t pos_ = 0;
};

inline std::vector<Task> read_file(const std::string& path,
                                   std::vector<std::string>* warnings = nullptr) {
  Reader reader(path);
  std::vector<Task> tasks;
  Task task;
  while (reader.next(task, nullptr, warnings)) tasks.push_back(std::move(task));
  return tasks;
}

inline void write_file(const std::string& path, std::span<const Task> tasks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  for (const Task& t : tasks) out << encode(t) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failure on '" + path + "'");
}

}  // namespace daisen::jsonl

#endif  // DAISEN_JSONL_HPP
