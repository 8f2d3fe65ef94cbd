#pragma once

// Minimal CSV I/O. Numbers are written with %.17g so files round-trip
// exactly and identical runs give identical bytes.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tscl::csv {

using Cell = std::variant<double, long long, std::string>;

inline std::string format(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format(*d);
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("csv: no column '" + name + "'");
  }
  double number(std::size_t row, std::size_t col) const {
    const std::string& s = rows.at(row).at(col);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size())
      throw std::runtime_error("csv: non-numeric cell '" + s + "' at row " + std::to_string(row + 1));
    return v;
  }
};

class Writer {
 public:
  Writer(const std::string& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("csv: cannot open " + path + " for writing");
    write_line(header);
  }

  void row(const std::vector<Cell>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (const auto& c : cells) s.push_back(format(c));
    write_line(s);
  }

 private:
  void write_line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw std::runtime_error("csv: write failed");
  }

  std::ofstream out_;
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a header plus rectangular body. Throws on an empty file or ragged rows.
inline Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw std::runtime_error("csv: " + path + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw std::runtime_error("csv: " + path + " is empty");
  if (t.rows.empty()) throw std::runtime_error("csv: " + path + " has a header but no rows");
  return t;
}

}  // namespace tscl::csv
