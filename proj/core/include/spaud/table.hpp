#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spaud/common.hpp"

namespace spaud {

/// Column-named raw data. Cells are kept as strings; numeric parsing happens
/// at the point of use so a column can serve as categorical or continuous.
/// Missing cells are rejected at read time, with the offending row index.
class DataTable {
 public:
  DataTable() = default;
  DataTable(std::vector<std::string> names,
            std::vector<std::vector<std::string>> columns);

  static DataTable read_csv(const std::string& path);
  static DataTable read_csv(std::istream& in, const std::string& origin);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool has_column(const std::string& name) const;
  const std::vector<std::string>& text_column(const std::string& name) const;
  /// Parses the named column as doubles; input_error naming the first bad cell.
  Vector numeric_column(const std::string& name) const;

  /// Replace a column with numeric values (used by sweep drivers to
  /// standardize baselines before offset draws).
  void set_numeric_column(const std::string& name, const Vector& values);

  void write_csv(std::ostream& out) const;

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> columns_;
  std::size_t rows_ = 0;
};

}  // namespace spaud
