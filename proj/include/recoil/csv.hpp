#pragma once

#include <string>
#include <vector>

#include "recoil/fringe.hpp"

namespace recoil::csv {

/// Numeric table: fixed header, one row per line, '#' comments skipped.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Reads a comma-separated numeric table and checks the header matches
/// `expected_columns` exactly. Throws DataError with the offending line
/// number on malformed input.
Table read_table(const std::string& path,
                 const std::vector<std::string>& expected_columns);

/// Writes a table with 17-significant-digit values so that reading it back
/// reproduces every double bit-exactly. The file is written to a temporary
/// name in the same directory and renamed into place.
void write_table(const std::string& path, const Table& table);

/// scan.csv: position_m, counts, dwell_s. All dwell values must agree;
/// counts must be non-negative integers.
FringeScan load_fringe_scan(const std::string& path);
void save_fringe_scan(const std::string& path, const FringeScan& scan);

/// curve/offsets/powers.csv: <abscissa>, ratio, ratio_err where the
/// abscissa header is distance_m, offset_m or power_w. `abscissa_column`
/// names which one to expect; an empty string accepts any of the three.
std::vector<RatioPoint> load_ratio_points(const std::string& path,
                                          const std::string& abscissa_column);
void save_ratio_points(const std::string& path,
                       const std::vector<RatioPoint>& points,
                       const std::string& abscissa_column);

}  // namespace recoil::csv
