#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lu::cli {

/// Plain comma-separated table: header line, no quoting.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(std::string_view column) const;
  /// Throws ValidationError naming the file when the column is missing.
  std::size_t require(std::string_view column) const;
  /// Cell as a finite double; throws ValidationError naming the row (1-based, header is row 1).
  double number(std::size_t row, std::size_t column) const;
};

/// Throws ValidationError on a ragged row (naming it) or an empty file.
CsvTable parse_csv(std::string_view text, std::string source = "<csv>");
CsvTable read_csv(const std::filesystem::path& path);

/// %.17g, the format every numeric CSV cell is written in.
std::string format_double(double v);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lu::cli
