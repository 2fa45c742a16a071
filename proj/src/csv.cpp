#include "eigenopt/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eigenopt {

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw std::invalid_argument("csv row width does not match header");
  rows.push_back(std::move(row));
}

std::string format_number(double value) {
  char buf[32];
  // Shortest representation that parses back to the same double.
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string format_number(long value) { return std::to_string(value); }
std::string format_number(int value) { return std::to_string(value); }

namespace {

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\n\"") != std::string::npos)
      throw std::invalid_argument("csv cell contains a separator: " + cells[i]);
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    cells.push_back(line.substr(begin, comma - begin));
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return cells;
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      table.header = split(line);
      first = false;
    } else {
      table.add_row(split(line));
    }
  }
  if (first) throw std::runtime_error("csv has no header row");
  return table;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_file_atomic(path, to_csv(table));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

CsvTable matrix_table(const Eigen::MatrixXd& m,
                      std::vector<std::string> header) {
  CsvTable table;
  if (header.empty())
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      header.push_back("c" + std::to_string(j));
  if (static_cast<Eigen::Index>(header.size()) != m.cols())
    throw std::invalid_argument("header width does not match matrix");
  table.header = std::move(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(format_number(m(i, j)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

Eigen::MatrixXd table_matrix(const CsvTable& table) {
  Eigen::MatrixXd m(table.rows.size(), table.header.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      const std::string& cell = table.rows[i][j];
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw std::runtime_error("non-numeric csv cell: " + cell);
      m(i, j) = v;
    }
  return m;
}

}  // namespace eigenopt
