#include "recoil/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "recoil/errors.hpp"

namespace recoil::csv {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void fail(const std::string& path, long line,
                       const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& field, const std::string& path,
                    long line) {
  if (field.empty()) fail(path, line, "empty field");
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    fail(path, line, "not a number: '" + field + "'");
  if (errno == ERANGE && !std::isfinite(value))
    fail(path, line, "value out of range: '" + field + "'");
  return value;
}

std::string format_value(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot replace " + path + ": " +
                    std::strerror(errno));
  }
}

const std::vector<std::string> kScanColumns = {"position_m", "counts",
                                               "dwell_s"};
const std::vector<std::string> kAbscissaColumns = {"distance_m", "offset_m",
                                                   "power_w"};

}  // namespace

Table read_table(const std::string& path,
                 const std::vector<std::string>& expected_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);

  Table table;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto fields = split_fields(stripped);
    if (!have_header) {
      if (!expected_columns.empty() && fields != expected_columns) {
        std::ostringstream want;
        for (std::size_t i = 0; i < expected_columns.size(); ++i)
          want << (i ? "," : "") << expected_columns[i];
        fail(path, line_no, "expected header '" + want.str() + "'");
      }
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size())
      fail(path, line_no,
           "expected " + std::to_string(table.columns.size()) +
               " fields, got " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& field : fields)
      row.push_back(parse_double(field, path, line_no));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError(path + ": no header line");
  return table;
}

void write_table(const std::string& path, const Table& table) {
  std::ostringstream out;
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw DataError("row width mismatch writing " + path);
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_value(row[i]);
    out << '\n';
  }
  atomic_write(path, out.str());
}

FringeScan load_fringe_scan(const std::string& path) {
  const Table table = read_table(path, kScanColumns);
  if (table.rows.empty()) throw DataError(path + ": no data rows");

  FringeScan scan;
  scan.dwell_s = table.rows.front()[2];
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    scan.positions_m.push_back(row[0]);
    const double counts = row[1];
    if (counts < 0.0 || counts != std::floor(counts))
      throw DataError(path + ": counts must be non-negative integers (row " +
                      std::to_string(i + 1) + ")");
    scan.counts.push_back(static_cast<long long>(counts));
    if (row[2] != scan.dwell_s)
      throw DataError(path + ": dwell_s must be constant (row " +
                      std::to_string(i + 1) + ")");
  }
  return scan;
}

void save_fringe_scan(const std::string& path, const FringeScan& scan) {
  Table table;
  table.columns = kScanColumns;
  for (std::size_t i = 0; i < scan.positions_m.size(); ++i)
    table.rows.push_back({scan.positions_m[i],
                          static_cast<double>(scan.counts[i]), scan.dwell_s});
  write_table(path, table);
}

std::vector<RatioPoint> load_ratio_points(const std::string& path,
                                          const std::string& abscissa_column) {
  std::vector<std::string> expected;
  if (!abscissa_column.empty())
    expected = {abscissa_column, "ratio", "ratio_err"};
  Table table = read_table(path, expected);
  if (expected.empty()) {
    bool known = false;
    for (const auto& name : kAbscissaColumns)
      known = known || (!table.columns.empty() && table.columns[0] == name);
    const std::vector<std::string> rest = {"ratio", "ratio_err"};
    if (!known || table.columns.size() != 3 ||
        std::vector<std::string>(table.columns.begin() + 1,
                                 table.columns.end()) != rest)
      throw DataError(path +
                      ": expected header '<distance_m|offset_m|power_w>,"
                      "ratio,ratio_err'");
  }
  if (table.rows.empty()) throw DataError(path + ": no data rows");

  std::vector<RatioPoint> points;
  points.reserve(table.rows.size());
  for (const auto& row : table.rows)
    points.push_back({row[0], row[1], row[2]});
  return points;
}

void save_ratio_points(const std::string& path,
                       const std::vector<RatioPoint>& points,
                       const std::string& abscissa_column) {
  Table table;
  table.columns = {abscissa_column, "ratio", "ratio_err"};
  for (const auto& p : points)
    table.rows.push_back({p.abscissa, p.ratio, p.ratio_err});
  write_table(path, table);
}

}  // namespace recoil::csv
