// Copyright 2026 The tailrisk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal comma-separated text helpers shared by the loaders and writers.
// Fields are never quoted; identifiers must not contain commas or newlines.
// Number parsing and formatting go through <charconv>, so neither depends on
// the global locale.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tailrisk/error.hpp"

namespace tailrisk::csv {

/// Split on ',' without any quoting rules. An empty line yields one empty field.
inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

/// Location prefix used in every parse error: "<source>:<line>: ".
inline std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  // from_chars rejects a leading '+', accept it for friendliness.
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return v;
}

/// Parse a finite real or throw with the row location.
inline double finite_double(std::string_view s, std::string_view column,
                            std::string_view source, std::size_t line) {
  auto v = to_double(s);
  if (!v) {
    throw ValidationError(where(source, line) + "column '" + std::string(column) +
                          "': not a number: '" + std::string(s) + "'");
  }
  if (!std::isfinite(*v)) {
    throw ValidationError(where(source, line) + "column '" + std::string(column) +
                          "': non-finite value '" + std::string(s) + "'");
  }
  return *v;
}

inline bool flag01(std::string_view s, std::string_view column, std::string_view source,
                   std::size_t line) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw ValidationError(where(source, line) + "column '" + std::string(column) +
                        "': expected 0 or 1, got '" + std::string(s) + "'");
}

inline std::int64_t integer(std::string_view s, std::string_view column,
                            std::string_view source, std::size_t line) {
  auto v = to_int(s);
  if (!v) {
    throw ValidationError(where(source, line) + "column '" + std::string(column) +
                          "': not an integer: '" + std::string(s) + "'");
  }
  return *v;
}

/// Shortest representation that parses back to the same double.
inline std::string format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Reads lines while tracking the 1-based line number.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace tailrisk::csv
