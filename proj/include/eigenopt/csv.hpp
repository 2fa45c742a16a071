#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace eigenopt {

// Comma-separated, one header row, LF line endings. Cells are written as
// given; callers format numbers with format_number.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

// Shortest round-trippable form (17 significant digits at most).
std::string format_number(double value);
std::string format_number(long value);
std::string format_number(int value);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

// Numeric matrix with header c0..c{n-1} unless one is given.
CsvTable matrix_table(const Eigen::MatrixXd& m,
                      std::vector<std::string> header = {});
Eigen::MatrixXd table_matrix(const CsvTable& table);

}  // namespace eigenopt
