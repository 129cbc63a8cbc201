#pragma once

// Minimal CSV plumbing: shortest round-trip number formatting, LF line
// endings, and a splitter for reading exports back.

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace wavestopper::csv {

/// Shortest decimal text that parses back to exactly `v`. NaN becomes an
/// empty field.
inline void append_number(std::string& out, double v) {
  if (std::isnan(v)) return;
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("csv: number formatting failed");
  out.append(buf.data(), end);
}

inline void append_number(std::string& out, long long v) {
  std::array<char, 24> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("csv: number formatting failed");
  out.append(buf.data(), end);
}

inline std::string format_number(double v) {
  std::string s;
  append_number(s, v);
  return s;
}

/// Parses a field written by append_number; empty means NaN.
inline double parse_number(std::string_view field) {
  if (field.empty()) return std::nan("");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw std::invalid_argument("csv: not a number: '" + std::string(field) + "'");
  return v;
}

using Row = std::vector<std::string>;

/// Splits LF-terminated, comma-separated text. No quoting support; none of the
/// exports emit quoted fields.
inline std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    Row row;
    std::size_t f = 0;
    while (true) {
      const std::size_t comma = line.find(',', f);
      row.emplace_back(line.substr(f, comma == std::string_view::npos ? line.npos : comma - f));
      if (comma == std::string_view::npos) break;
      f = comma + 1;
    }
    rows.push_back(std::move(row));
    start = end + 1;
  }
  return rows;
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace wavestopper::csv
