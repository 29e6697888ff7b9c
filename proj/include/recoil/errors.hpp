#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace recoil {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or invalid configuration file. Carries file/line context.
struct ConfigError : Error {
  ConfigError(std::string msg, std::string file_path = {}, int line_no = 0)
      : Error(format(msg, file_path, line_no)),
        file(std::move(file_path)),
        line(line_no) {}

  std::string file;
  int line = 0;

 private:
  static std::string format(const std::string& msg, const std::string& f, int l) {
    if (f.empty()) return msg;
    return f + (l > 0 ? ":" + std::to_string(l) : "") + ": " + msg;
  }
};

/// Invalid input data (CSV contents, inconsistent tables, range violations).
struct DataError : Error {
  using Error::Error;
};

/// A fit failed: non-convergence, degenerate inputs, or an out-of-range
/// result that would otherwise need clamping.
struct FitError : Error {
  using Error::Error;
};

/// Numerical quadrature could not reach the requested tolerance.
/// Carries the achieved error estimate so callers can decide what to do.
struct QuadratureError : Error {
  QuadratureError(const std::string& msg, double achieved, double requested)
      : Error(msg + " (achieved error estimate " + sci(achieved) +
              ", requested " + sci(requested) + ")"),
        achieved_error(achieved),
        requested_tolerance(requested) {}

  double achieved_error;
  double requested_tolerance;

 private:
  static std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
  }
};

}  // namespace recoil
