#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace recoil::num {

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile (inverse CDF), p in (0, 1).
/// Rational initial guess refined with Newton steps on erfc; accurate to
/// a few ulp over the full open interval.
double normal_quantile(double p);

/// exp(-x) * I0(x) for x >= 0 (scaled modified Bessel function).
double bessel_i0_scaled(double x);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// CDF of the chi-square distribution with dof degrees of freedom.
double chi_square_cdf(double x, int dof);

/// Quantile of the chi-square distribution (inverse CDF), p in (0, 1).
double chi_square_quantile(double p, int dof);

/// Compensated (Neumaier) accumulator. Order-independent enough for
/// reductions that must not drift with chunking.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Solves the dense system A x = b in place for small n (Gaussian
/// elimination with partial pivoting). A is row-major n*n.
/// Returns false if the matrix is numerically singular.
bool solve_dense(std::vector<double>& a, std::vector<double>& b, std::size_t n);

/// Inverts a small dense matrix in place. Returns false if singular.
bool invert_dense(std::vector<double>& a, std::size_t n);

}  // namespace recoil::num
