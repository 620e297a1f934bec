#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sdr/errors.hpp"
#include "sdr/types.hpp"

namespace sdr {

/// Shortest decimal rendering that round-trips the exact double value.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, long line) {
  double v = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ParseError(line, "cannot parse number '" + std::string(token) + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // rows x header.size()
};

/// Reads a numeric CSV with one header line. Blank trailing lines are
/// ignored; everything else must parse, with errors reported by line.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  long line_no = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (in.peek() == EOF) break;
      throw ParseError(line_no, "blank line");
    }
    const auto tokens = split_csv_line(line);
    if (table.header.empty()) {
      table.header.assign(tokens.begin(), tokens.end());
      continue;
    }
    if (tokens.size() != table.header.size())
      throw ParseError(line_no, "expected " +
                                    std::to_string(table.header.size()) +
                                    " fields, got " +
                                    std::to_string(tokens.size()));
    std::vector<double> row;
    row.reserve(tokens.size());
    for (const auto& t : tokens) row.push_back(parse_double(t, line_no));
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError(1, "missing header line");
  table.values.resize(static_cast<Index>(rows.size()),
                      static_cast<Index>(table.header.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

/// Writes content to a temporary sibling then renames it into place, so a
/// partially written file never appears under the target name.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw ConfigError("cannot move '" + tmp.string() + "' to '" + path +
                      "': " + ec.message());
}

inline std::string csv_row(const std::vector<double>& values) {
  std::string line;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    line += format_double(values[i]);
  }
  return line;
}

/// Basis file: '#'-prefixed metadata lines followed by a bare numeric body.
struct BasisFile {
  std::vector<std::string> metadata;  // without the leading "# "
  Matrix values;
};

inline BasisFile read_basis_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  BasisFile file;
  std::string line;
  long line_no = 0;
  std::vector<std::vector<double>> rows;
  size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      size_t start = 1;
      while (start < line.size() && line[start] == ' ') ++start;
      file.metadata.push_back(line.substr(start));
      continue;
    }
    const auto tokens = split_csv_line(line);
    if (width == 0) width = tokens.size();
    if (tokens.size() != width)
      throw ParseError(line_no, "ragged basis row");
    std::vector<double> row;
    for (const auto& t : tokens) row.push_back(parse_double(t, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(line_no, "basis file has no numeric rows");
  file.values.resize(static_cast<Index>(rows.size()),
                     static_cast<Index>(width));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < width; ++j)
      file.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return file;
}

}  // namespace sdr
