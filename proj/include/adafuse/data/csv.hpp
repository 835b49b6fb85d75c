#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/data/dataset.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace adafuse {

/// Label column by header name (requires a header row) or zero-based index.
using LabelColumn = std::variant<std::string, std::size_t>;

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_index(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// 17 significant digits: always reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace detail

/// Reads a comma-separated file. Labels that are exactly the integers {0..K-1} keep
/// their value as the class index; any other labels map to classes by first appearance.
inline Dataset load_csv(const std::string& path, const LabelColumn& label_column, bool header) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_csv: cannot open '" + path + "'");

  std::vector<std::string> lines;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    lines.push_back(line);
    line_numbers.push_back(line_no);
  }
  if (lines.empty()) throw ParseError("load_csv: '" + path + "' is empty");

  std::size_t first_data = 0;
  std::vector<std::string> header_cells;
  std::size_t width = detail::split_commas(lines[0]).size();
  if (header) {
    for (auto cell : detail::split_commas(lines[0])) header_cells.emplace_back(detail::trim(cell));
    first_data = 1;
  }

  std::size_t label_idx = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    if (!header) throw ParseError("load_csv: label column by name requires a header row");
    auto it = std::find(header_cells.begin(), header_cells.end(), *name);
    if (it == header_cells.end()) throw ParseError("load_csv: no column named '" + *name + "'");
    label_idx = static_cast<std::size_t>(it - header_cells.begin());
  } else {
    label_idx = std::get<std::size_t>(label_column);
  }
  if (label_idx >= width) {
    throw ParseError("load_csv: label column " + std::to_string(label_idx) + " out of range");
  }
  if (width < 2) throw ParseError("load_csv: need at least one feature column and a label");

  const std::size_t n = lines.size() - first_data;
  if (n == 0) throw ParseError("load_csv: no data rows in '" + path + "'");
  Matrix x(n, width - 1);
  std::vector<std::string> raw_labels;
  raw_labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = detail::split_commas(lines[first_data + r]);
    const std::size_t file_line = line_numbers[first_data + r];
    if (cells.size() != width) {
      throw ParseError("load_csv: ragged row at line " + std::to_string(file_line) + ": expected " +
                       std::to_string(width) + " cells, found " + std::to_string(cells.size()));
    }
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const auto cell = detail::trim(cells[c]);
      if (c == label_idx) {
        if (cell.empty()) {
          throw ParseError("load_csv: empty label at line " + std::to_string(file_line));
        }
        raw_labels.emplace_back(cell);
        continue;
      }
      double v = 0.0;
      if (!detail::parse_double(cell, v)) {
        throw ParseError("load_csv: unparseable cell '" + std::string(cell) + "' at line " +
                         std::to_string(file_line) + ", column " + std::to_string(c + 1));
      }
      x(r, out_col++) = v;
    }
  }

  Dataset ds;
  ds.x = std::move(x);
  ds.y.resize(n);

  // First-appearance mapping, unless the labels already are the contiguous indices 0..K-1.
  std::map<std::string, std::size_t> first_seen;
  std::vector<std::string> order;
  for (const auto& l : raw_labels) {
    if (first_seen.emplace(l, order.size()).second) order.push_back(l);
  }
  bool contiguous = true;
  std::vector<bool> present(order.size(), false);
  for (const auto& l : order) {
    std::size_t v = 0;
    if (!detail::parse_index(l, v) || v >= order.size() || present[v]) {
      contiguous = false;
      break;
    }
    present[v] = true;
  }
  ds.class_count = order.size();
  if (ds.class_count < 2) {
    throw ParseError("load_csv: '" + path + "' contains a single class");
  }
  ds.class_names.resize(ds.class_count);
  for (std::size_t i = 0; i < n; ++i) {
    if (contiguous) {
      detail::parse_index(raw_labels[i], ds.y[i]);
    } else {
      ds.y[i] = first_seen.at(raw_labels[i]);
    }
  }
  for (const auto& [name, idx] : first_seen) {
    std::size_t v = idx;
    if (contiguous) detail::parse_index(name, v);
    ds.class_names[v] = name;
  }

  if (header) {
    for (std::size_t c = 0; c < width; ++c)
      if (c != label_idx) ds.feature_names.push_back(header_cells[c]);
  } else {
    ds.feature_names = default_feature_names(width - 1);
  }
  ds.validate();
  return ds;
}

/// Header row of feature names plus "label"; features with 17 significant digits,
/// labels as class indices so the file reloads to the same Dataset.
inline void write_csv(const Dataset& ds, std::ostream& out) {
  const auto names = ds.feature_names.empty() ? default_feature_names(ds.dim()) : ds.feature_names;
  for (const auto& name : names) out << name << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.x.row(i)) out << detail::format_double(v) << ',';
    out << ds.y[i] << '\n';
  }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_csv: cannot write '" + path + "'");
  write_csv(ds, out);
  if (!out) throw Error("save_csv: write failed for '" + path + "'");
}

}  // namespace adafuse
