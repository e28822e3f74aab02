#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dtnlqr/common.hpp"

namespace dtnlqr {

/// Shortest round-trip text is not required; every value is printed with 17
/// significant digits so parsing recovers the double exactly.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column j as a vector; throws std::out_of_range for unknown names.
  std::vector<double> column(const std::string& name) const;
};

/// Comma-separated, header row, LF endings.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace dtnlqr
