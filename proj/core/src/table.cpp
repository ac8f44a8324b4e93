#include "spaud/table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace spaud {

namespace {

// One CSV record. Handles double-quoted fields with "" escapes; no
// multi-line fields.
std::vector<std::string> split_csv_line(const std::string& line,
                                        const std::string& origin,
                                        std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw input_error(origin + ":" + std::to_string(line_no) +
                      ": unterminated quote");
  }
  out.push_back(field);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

DataTable::DataTable(std::vector<std::string> names,
                     std::vector<std::vector<std::string>> columns)
    : names_(std::move(names)), columns_(std::move(columns)) {
  require_input(names_.size() == columns_.size(),
                "DataTable: name/column count mismatch");
  rows_ = columns_.empty() ? 0 : columns_[0].size();
  for (const auto& c : columns_) {
    require_input(c.size() == rows_, "DataTable: ragged columns");
  }
}

DataTable DataTable::read_csv(const std::string& path) {
  std::ifstream in(path);
  require_input(in.good(), "cannot open data file: " + path);
  return read_csv(in, path);
}

DataTable DataTable::read_csv(std::istream& in, const std::string& origin) {
  std::string line;
  require_input(static_cast<bool>(std::getline(in, line)),
                origin + ": empty file, header row required");
  std::vector<std::string> names = split_csv_line(line, origin, 1);
  for (auto& n : names) n = trim(n);
  require_input(!names.empty(), origin + ": no columns in header");
  for (std::size_t i = 0; i < names.size(); ++i) {
    require_input(!names[i].empty(),
                  origin + ": empty column name in header");
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      require_input(names[i] != names[j],
                    origin + ": duplicate column name '" + names[i] + "'");
    }
  }

  std::vector<std::vector<std::string>> columns(names.size());
  std::size_t line_no = 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line, origin, line_no);
    require_input(cells.size() == names.size(),
                  origin + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(names.size()) + " cells, got " +
                      std::to_string(cells.size()));
    ++row;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      std::string cell = trim(cells[j]);
      require_input(!cell.empty(), origin + ": missing value in column '" +
                                       names[j] + "' at data row " +
                                       std::to_string(row));
      columns[j].push_back(std::move(cell));
    }
  }
  return DataTable(std::move(names), std::move(columns));
}

bool DataTable::has_column(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::size_t DataTable::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw input_error("no such column: '" + name + "'");
}

const std::vector<std::string>& DataTable::text_column(
    const std::string& name) const {
  return columns_[index_of(name)];
}

Vector DataTable::numeric_column(const std::string& name) const {
  const auto& col = columns_[index_of(name)];
  Vector out(static_cast<Eigen::Index>(col.size()));
  for (std::size_t i = 0; i < col.size(); ++i) {
    double value = 0.0;
    const char* begin = col[i].data();
    const char* end = begin + col[i].size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    require_input(ec == std::errc() && ptr == end,
                  "column '" + name + "' is not numeric at data row " +
                      std::to_string(i + 1) + " (cell '" + col[i] + "')");
    out[static_cast<Eigen::Index>(i)] = value;
  }
  return out;
}

void DataTable::set_numeric_column(const std::string& name,
                                   const Vector& values) {
  auto& col = columns_[index_of(name)];
  require_input(static_cast<std::size_t>(values.size()) == col.size(),
                "set_numeric_column: length mismatch");
  for (std::size_t i = 0; i < col.size(); ++i) {
    std::ostringstream os;
    os.precision(17);
    os << values[static_cast<Eigen::Index>(i)];
    col[i] = os.str();
  }
}

void DataTable::write_csv(std::ostream& out) const {
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (j) out << ',';
    out << names_[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (j) out << ',';
      out << columns_[j][i];
    }
    out << '\n';
  }
}

}  // namespace spaud
