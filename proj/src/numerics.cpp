#include "recoil/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "recoil/errors.hpp"

namespace recoil::num {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

// Moderate-accuracy rational approximation to the normal quantile,
// good to ~1e-4; Newton refinement below takes it to machine precision.
double normal_quantile_estimate(double p) {
  // Beasley-Springer central region, log-polynomial tails.
  if (p < 0.02425 || p > 1.0 - 0.02425) {
    double q = std::sqrt(-2.0 * std::log(p < 0.5 ? p : 1.0 - p));
    double x = (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q -
                   2.400758277161838e+00) *
                      q -
                  2.549732539343734e+00) *
                     q +
                 4.374664141464968e+00) *
                    q +
                2.938163982698783e+00) /
               ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q +
                  2.445134137142996e+00) *
                     q +
                 3.754408661907416e+00) *
                    q +
                1.0);
    return p < 0.5 ? x : -x;
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r -
             2.759285104469687e+02) *
                r +
            1.383577518672690e+02) *
               r -
           3.066479806614716e+01) *
              r +
          2.506628277459239e+00) *
         q /
         (((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r -
             1.556989798598866e+02) *
                r +
            6.680131188771972e+01) *
               r -
           1.328068155288572e+01) *
              r +
          1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  double x = normal_quantile_estimate(p);
  // Halley refinement: u = (Phi(x) - p) / phi(x).
  for (int i = 0; i < 2; ++i) {
    double e = normal_cdf(x) - p;
    double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (phi <= 0.0) break;
    double u = e / phi;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double bessel_i0_scaled(double x) {
  if (x < 0.0) throw std::domain_error("bessel_i0_scaled: x must be >= 0");
  if (x < 3.75) {
    double t = x / 3.75;
    double t2 = t * t;
    double i0 =
        1.0 +
        t2 * (3.5156229 +
              t2 * (3.0899424 +
                    t2 * (1.2067492 +
                          t2 * (0.2659732 +
                                t2 * (0.0360768 + t2 * 0.0045813)))));
    return i0 * std::exp(-x);
  }
  double t = 3.75 / x;
  double poly =
      0.39894228 +
      t * (0.01328592 +
           t * (0.00225319 +
                t * (-0.00157565 +
                     t * (0.00916281 +
                          t * (-0.02057706 +
                               t * (0.02635537 +
                                    t * (-0.01647633 + t * 0.00392377)))))));
  return poly / std::sqrt(x);
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw Error("gamma_p: series failed to converge");
}

// Continued fraction for Q(a, x) = 1 - P(a, x), valid for x >= a + 1.
// Modified Lentz evaluation.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw Error("gamma_p: continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("gamma_p: a must be > 0");
  if (x < 0.0) throw std::domain_error("gamma_p: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_square_cdf(double x, int dof) {
  if (dof < 1) throw std::domain_error("chi_square_cdf: dof must be >= 1");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi_square_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("chi_square_quantile: p must lie in (0, 1)");
  if (dof < 1)
    throw std::domain_error("chi_square_quantile: dof must be >= 1");
  // Bracket then bisect; the CDF is monotone and cheap.
  double lo = 0.0;
  double hi = dof + 10.0;
  while (chi_square_cdf(hi, dof) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (chi_square_cdf(mid, dof) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

bool solve_dense(std::vector<double>& a, std::vector<double>& b,
                 std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(a[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      double v = std::abs(a[r * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best == 0.0 || !std::isfinite(best)) return false;
    if (piv != col) {
      for (std::size_t c = col; c < n; ++c)
        std::swap(a[col * n + c], a[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    double inv = 1.0 / a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a[r * n + col] * inv;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * b[c];
    b[i] = s / a[i * n + i];
    if (!std::isfinite(b[i])) return false;
  }
  return true;
}

bool invert_dense(std::vector<double>& a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::vector<double> work = a;
    std::vector<double> e(n, 0.0);
    e[col] = 1.0;
    if (!solve_dense(work, e, n)) return false;
    for (std::size_t r = 0; r < n; ++r) inv[r * n + col] = e[r];
  }
  a = std::move(inv);
  return true;
}

}  // namespace recoil::num
