#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "uprop/core.hpp"
#include "uprop/errors.hpp"

namespace uprop {

/// Numeric table with a missingness mask; column 0 is the target y.
struct Dataset {
  Matrix values;  // N x (p+1); masked cells hold NaN
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = missing
  std::vector<std::string> columns;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  bool complete() const { return !mask.any(); }

  /// J*: indices of rows with at least one missing entry.
  std::vector<Index> rows_with_missing() const {
    std::vector<Index> out;
    for (Index i = 0; i < rows(); ++i) {
      if (mask.row(i).any()) out.push_back(i);
    }
    return out;
  }

  static Dataset from_values(Matrix v, std::vector<std::string> names = {}) {
    Dataset d;
    d.mask.setConstant(v.rows(), v.cols(), false);
    d.values = std::move(v);
    if (names.empty()) {
      names.push_back("y");
      for (Index j = 1; j < d.values.cols(); ++j)
        names.push_back("x" + std::to_string(j));
    }
    d.columns = std::move(names);
    return d;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

/// Read a dataset CSV: header row, numeric columns, empty cell = missing.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Dataset d;
  d.columns = split_csv_line(line);
  const Index p1 = static_cast<Index>(d.columns.size());
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> masks;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != p1)
      throw IoError("ragged row in " + path);
    std::vector<double> row(fields.size());
    std::vector<bool> mrow(fields.size());
    for (size_t j = 0; j < fields.size(); ++j) {
      if (fields[j].empty()) {
        row[j] = std::numeric_limits<double>::quiet_NaN();
        mrow[j] = true;
      } else {
        row[j] = std::stod(fields[j]);
        mrow[j] = false;
      }
    }
    rows.push_back(std::move(row));
    masks.push_back(std::move(mrow));
  }
  d.values.resize(static_cast<Index>(rows.size()), p1);
  d.mask.resize(static_cast<Index>(rows.size()), p1);
  for (Index i = 0; i < d.values.rows(); ++i) {
    for (Index j = 0; j < p1; ++j) {
      d.values(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
      d.mask(i, j) = masks[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  return d;
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (size_t j = 0; j < d.columns.size(); ++j)
    out << d.columns[j] << (j + 1 < d.columns.size() ? "," : "\n");
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = 0; j < d.cols(); ++j) {
      if (!d.mask(i, j)) out << d.values(i, j);
      out << (j + 1 < d.cols() ? "," : "\n");
    }
  }
}

}  // namespace uprop
