#include "cli/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cobin/error.hpp"

namespace cobin::cli {

int Table::find(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  return -1;
}

Eigen::VectorXd Table::column(const std::string& name) const {
  const int j = find(name);
  if (j < 0) throw ConfigError("CSV has no column '" + name + "'");
  return Eigen::Map<const Eigen::VectorXd>(columns[j].data(), static_cast<Eigen::Index>(columns[j].size()));
}

void Table::add(const std::string& name, const Eigen::VectorXd& values) {
  if (!columns.empty() && values.size() != rows()) throw ConfigError("CSV column length mismatch for " + name);
  names.push_back(name);
  columns.emplace_back(values.data(), values.data() + values.size());
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t k = 0;
  while (k < s.size() && s[k] == ' ') ++k;
  return s.substr(k);
}

}  // namespace

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("CSV file '" + path + "' is empty");
  Table t;
  for (auto& h : split(line)) t.names.push_back(trim(h));
  t.columns.resize(t.names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.names.size()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.names.size()) +
                        " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string c = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size() || c.empty()) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": column '" + t.names[j] +
                          "' is not a number: '" + c + "'");
      }
      t.columns[j].push_back(v);
    }
  }
  return t;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void write_csv(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < t.names.size(); ++j) out << (j ? "," : "") << t.names[j];
  out << '\n';
  const auto n = t.rows();
  std::string row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      if (j) row += ',';
      row += format_double(t.columns[j][i]);
    }
    row += '\n';
    out << row;
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace cobin::cli

namespace cobin::cli {

void write_text_csv(const std::string& path, const std::vector<std::string>& names,
                    const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace cobin::cli
