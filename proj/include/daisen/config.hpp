#ifndef DAISEN_CONFIG_HPP
#define DAISEN_CONFIG_HPP

// Reader for the small TOML subset used by daisen config files:
// `[section]` headers, `key = value` pairs with bare or quoted keys, and
// number, boolean or quoted-string values. `#` starts a comment.

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "daisen/error.hpp"

namespace daisen::config {

using Value = std::variant<double, bool, std::string>;

struct Entry {
  std::string section;
  std::string key;
  Value value;
  int line = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void fail(int line, const std::string& what) {
  throw Error(ErrorCode::kConfig, "line " + std::to_string(line) + ": " + what);
}

// Reads a double-quoted string starting at s[0]; returns the decoded text and
// the number of characters consumed.
inline std::pair<std::string, std::size_t> quoted(std::string_view s, int line) {
  std::string out;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"') return {out, i + 1};
    if (c == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      switch (n) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(line, std::string("unsupported escape \\") + n);
      }
    } else {
      out += c;
    }
  }
  fail(line, "unterminated string");
}

inline std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && in_string) {
      ++i;
    } else if (s[i] == '"') {
      in_string = !in_string;
    } else if (s[i] == '#' && !in_string) {
      return s.substr(0, i);
    }
  }
  return s;
}

}  // namespace detail

inline std::vector<Entry> parse(std::string_view text) {
  std::vector<Entry> entries;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = detail::trim(detail::strip_comment(text.substr(pos, nl - pos)));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') detail::fail(line_no, "malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    Entry e;
    e.section = section;
    e.line = line_no;
    std::string_view rest;
    if (line.front() == '"') {
      auto [key, used] = detail::quoted(line, line_no);
      e.key = std::move(key);
      rest = detail::trim(line.substr(used));
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) detail::fail(line_no, "expected key = value");
      e.key = std::string(detail::trim(line.substr(0, eq)));
      rest = line.substr(eq);
      if (e.key.empty()) detail::fail(line_no, "empty key");
    }
    if (rest.empty() || rest.front() != '=') detail::fail(line_no, "expected '=' after key");
    std::string_view raw = detail::trim(rest.substr(1));
    if (raw.empty()) detail::fail(line_no, "missing value for '" + e.key + "'");
    if (raw.front() == '"') {
      auto [text_value, used] = detail::quoted(raw, line_no);
      if (!detail::trim(raw.substr(used)).empty()) detail::fail(line_no, "trailing characters");
      e.value = std::move(text_value);
    } else if (raw == "true" || raw == "false") {
      e.value = raw == "true";
    } else {
      std::string digits;
      for (char c : raw)
        if (c != '_') digits += c;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec != std::errc() || ptr != digits.data() + digits.size())
        detail::fail(line_no, "cannot read value '" + std::string(raw) + "'");
      e.value = v;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<Entry> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  }
}

inline double as_number(const Entry& e) {
  if (const double* v = std::get_if<double>(&e.value)) return *v;
  throw Error(ErrorCode::kConfig, "line " + std::to_string(e.line) + ": '" + e.key + "' must be a number");
}

}  // namespace daisen::config

#endif  // DAISEN_CONFIG_HPP
