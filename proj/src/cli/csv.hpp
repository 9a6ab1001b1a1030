#pragma once

// Minimal numeric CSV: header row, comma separated, '.' decimal, no quoting.

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cobin::cli {

struct Table {
  std::vector<std::string> names;
  /// One column per name, all of equal length.
  std::vector<std::vector<double>> columns;

  Eigen::Index rows() const { return columns.empty() ? 0 : static_cast<Eigen::Index>(columns[0].size()); }
  /// Index of a column or -1.
  int find(const std::string& name) const;
  /// Column by name; ConfigError naming the file when absent.
  Eigen::VectorXd column(const std::string& name) const;
  void add(const std::string& name, const Eigen::VectorXd& values);
};

/// Throws ConfigError on unreadable files, ragged rows or non-numeric cells.
Table read_csv(const std::string& path);
void write_csv(const std::string& path, const Table& t);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace cobin::cli

namespace cobin::cli {

/// Writes pre-formatted cells; used for tables with text columns.
void write_text_csv(const std::string& path, const std::vector<std::string>& names,
                    const std::vector<std::vector<std::string>>& rows);

}  // namespace cobin::cli
