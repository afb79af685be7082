#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sharpdim {

/// Round-trippable 17-significant-digit decimal with '.' separator.
std::string format_double(double x);

/// Minimal comma-separated table: header plus string cells. No quoting;
/// the toolkit never writes fields containing commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index, or throws std::runtime_error naming the column.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const CsvTable& table);

}  // namespace sharpdim
