#include "recoil/fringe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "recoil/errors.hpp"
#include "recoil/numerics.hpp"

namespace recoil {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_phase(double phi) {
  phi = std::remainder(phi, kTwoPi);
  if (phi <= -kPi) phi += kTwoPi;
  return phi;
}

struct LmFit {
  double chi2 = 0.0;
  bool converged = false;
};

/// Levenberg-Marquardt for a weighted scalar model y ~ f(p; x).
/// Model fills f and df/dp at one abscissa. Converges on relative
/// parameter change below 1e-10; stalls (no improving step) count as
/// converged since the linear solve is then at machine precision.
template <typename Model>
LmFit run_lm(std::vector<double>& params, const std::vector<double>& x,
             const std::vector<double>& y, const std::vector<double>& w,
             Model&& model) {
  const std::size_t np = params.size();
  const std::size_t n = x.size();
  std::vector<double> grad(np);

  auto chi2_of = [&](const std::vector<double>& p) {
    num::KahanSum c;
    for (std::size_t i = 0; i < n; ++i) {
      double f;
      model(p.data(), x[i], f, grad.data());
      const double r = y[i] - f;
      c.add(w[i] * r * r);
    }
    return c.value();
  };

  LmFit out;
  out.chi2 = chi2_of(params);
  double lambda = 1e-3;
  for (int iter = 0; iter < 200 && !out.converged; ++iter) {
    std::vector<double> a(np * np, 0.0), b(np, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double f;
      model(params.data(), x[i], f, grad.data());
      const double r = y[i] - f;
      for (std::size_t j = 0; j < np; ++j) {
        b[j] += w[i] * r * grad[j];
        for (std::size_t k = 0; k <= j; ++k)
          a[j * np + k] += w[i] * grad[j] * grad[k];
      }
    }
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t k = j + 1; k < np; ++k) a[j * np + k] = a[k * np + j];

    bool accepted = false;
    for (int tries = 0; tries < 32 && !accepted; ++tries) {
      std::vector<double> ad = a, step = b;
      for (std::size_t j = 0; j < np; ++j)
        ad[j * np + j] += lambda * (a[j * np + j] > 0.0 ? a[j * np + j] : 1.0);
      if (!num::solve_dense(ad, step, np)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial(np);
      double rel = 0.0;
      for (std::size_t j = 0; j < np; ++j) {
        trial[j] = params[j] + step[j];
        rel = std::max(rel, std::abs(step[j]) /
                                std::max(std::abs(trial[j]), 1e-300));
      }
      const double c2 = chi2_of(trial);
      if (c2 <= out.chi2) {
        params = std::move(trial);
        const double drop = out.chi2 - c2;
        out.chi2 = c2;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (rel < 1e-10 || drop <= 1e-14 * (out.chi2 + 1e-300))
          out.converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) out.converged = true;
  }
  return out;
}

struct SinusoidSolution {
  double mu, c, s;
  std::vector<double> cov;  // row-major, np x np
  double chi2;
};

}  // namespace

void validate(const FringeScan& scan) {
  if (scan.positions_m.size() != scan.counts.size())
    throw DataError("fringe scan has mismatched position and count lengths");
  if (scan.positions_m.size() < 8)
    throw DataError("fringe scan needs at least 8 points");
  if (!(scan.dwell_s > 0.0)) throw DataError("fringe scan dwell must be > 0");
  for (std::size_t i = 0; i < scan.counts.size(); ++i) {
    if (scan.counts[i] < 0) throw DataError("fringe scan has negative counts");
    if (!std::isfinite(scan.positions_m[i]))
      throw DataError("fringe scan has a non-finite position");
    if (i > 0 && !(scan.positions_m[i] > scan.positions_m[i - 1]))
      throw DataError("fringe scan positions must be strictly increasing");
  }
}

VisibilityResult extract_visibility(const FringeScan& scan, double period_m,
                                    PeriodMode mode) {
  validate(scan);
  if (!(period_m > 0.0) || !std::isfinite(period_m))
    throw std::domain_error("fringe period must be positive");
  const std::size_t n = scan.positions_m.size();
  if (scan.positions_m.back() - scan.positions_m.front() < period_m)
    throw DataError("fringe scan spans less than one fringe period");

  // Centered abscissas keep the free-period normal matrix well
  // conditioned; the phase is referenced back to x = 0 at the end.
  double x_mid = 0.0;
  for (double x : scan.positions_m) x_mid += x;
  x_mid /= static_cast<double>(n);

  std::vector<double> x(n), y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = scan.positions_m[i] - x_mid;
    y[i] = static_cast<double>(scan.counts[i]) / scan.dwell_s;
    const double sigma =
        std::sqrt(static_cast<double>(std::max<long long>(scan.counts[i], 1))) /
        scan.dwell_s;
    w[i] = 1.0 / (sigma * sigma);
  }

  const double k0 = kTwoPi / period_m;
  auto linear_fit = [&](double k) {
    std::vector<double> a(9, 0.0), b(3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double basis[3] = {1.0, std::cos(k * x[i]), std::sin(k * x[i])};
      for (int j = 0; j < 3; ++j) {
        b[j] += w[i] * y[i] * basis[j];
        for (int l = 0; l <= j; ++l) a[j * 3 + l] += w[i] * basis[j] * basis[l];
      }
    }
    a[1] = a[3];
    a[2] = a[6];
    a[5] = a[7];
    std::vector<double> cov = a;
    if (!num::solve_dense(a, b, 3) || !num::invert_dense(cov, 3))
      throw FitError("fringe fit normal equations are singular");
    num::KahanSum c2;
    for (std::size_t i = 0; i < n; ++i) {
      const double f =
          b[0] + b[1] * std::cos(k * x[i]) + b[2] * std::sin(k * x[i]);
      c2.add(w[i] * (y[i] - f) * (y[i] - f));
    }
    return SinusoidSolution{b[0], b[1], b[2], std::move(cov), c2.value()};
  };

  double k = k0;
  SinusoidSolution sol = linear_fit(k0);
  std::vector<double> cov;
  int np = 3;

  if (mode == PeriodMode::Free) {
    np = 4;
    std::vector<double> p = {sol.mu, sol.c, sol.s, k0};
    auto model = [](const double* q, double xi, double& f, double* g) {
      const double ph = q[3] * xi;
      const double co = std::cos(ph), si = std::sin(ph);
      f = q[0] + q[1] * co + q[2] * si;
      g[0] = 1.0;
      g[1] = co;
      g[2] = si;
      g[3] = xi * (q[2] * co - q[1] * si);
    };
    const auto lm = run_lm(p, x, y, w, model);
    if (!lm.converged) throw FitError("free-period fringe fit did not converge");
    if (!(p[3] > 0.0))
      throw FitError("free-period fringe fit left the physical domain");
    sol.mu = p[0];
    sol.c = p[1];
    sol.s = p[2];
    k = p[3];
    sol.chi2 = lm.chi2;
    std::vector<double> a(16, 0.0);
    double f_unused, g[4];
    for (std::size_t i = 0; i < n; ++i) {
      model(p.data(), x[i], f_unused, g);
      for (int j = 0; j < 4; ++j)
        for (int l = 0; l < 4; ++l) a[j * 4 + l] += w[i] * g[j] * g[l];
    }
    if (!num::invert_dense(a, 4))
      throw FitError("free-period covariance is singular");
    cov = std::move(a);
  } else {
    cov = std::move(sol.cov);
  }

  VisibilityResult out;
  out.period_m = kTwoPi / k;
  out.mean_rate_hz = sol.mu;
  if (!(sol.mu > 0.0)) throw FitError("fitted mean rate is not positive");
  const double amp = std::hypot(sol.c, sol.s);
  out.amplitude_hz = amp;
  out.chi2 = sol.chi2;
  out.dof = static_cast<int>(n) - np;
  if (amp > 0.0) {
    out.visibility = amp / sol.mu;
    out.phase_rad = wrap_phase(std::atan2(-sol.s, sol.c) - k * x_mid);
    std::vector<double> g(np, 0.0);
    g[0] = -out.visibility / sol.mu;
    g[1] = sol.c / (amp * sol.mu);
    g[2] = sol.s / (amp * sol.mu);
    double var = 0.0;
    for (int j = 0; j < np; ++j)
      for (int l = 0; l < np; ++l) var += g[j] * cov[j * np + l] * g[l];
    out.visibility_err = std::sqrt(std::max(var, 0.0));
  } else {
    out.visibility = 0.0;
    out.phase_rad = 0.0;
    out.visibility_err =
        std::sqrt(std::max(cov[1 * np + 1] + cov[2 * np + 2], 0.0)) / sol.mu;
  }
  if (out.visibility > 1.0)
    throw FitError("fitted visibility exceeds 1; the scan is not a fringe");
  return out;
}

RatioPoint visibility_ratio(const VisibilityResult& perturbed,
                            const VisibilityResult& reference,
                            double abscissa) {
  if (!(reference.visibility > 0.0))
    throw FitError("reference visibility is not positive");
  RatioPoint out;
  out.abscissa = abscissa;
  out.ratio = perturbed.visibility / reference.visibility;
  const double e_p = perturbed.visibility_err / reference.visibility;
  const double e_r = perturbed.visibility * reference.visibility_err /
                     (reference.visibility * reference.visibility);
  out.ratio_err = std::hypot(e_p, e_r);
  return out;
}

OffsetProfileFit fit_offset_profile(const std::vector<RatioPoint>& points,
                                    double waist_m, WaistMode mode) {
  if (!(waist_m > 0.0) || !std::isfinite(waist_m))
    throw std::domain_error("waist must be positive");
  const std::size_t np = (mode == WaistMode::Free) ? 3 : 2;
  if (points.size() < np + 1)
    throw DataError("offset profile fit needs more points than parameters");

  std::vector<double> x, y, w;
  for (const auto& p : points) {
    if (!(p.ratio_err > 0.0))
      throw DataError("offset profile fit needs positive ratio errors");
    x.push_back(p.abscissa);
    y.push_back(p.ratio);
    w.push_back(1.0 / (p.ratio_err * p.ratio_err));
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo)) throw DataError("offset profile fit needs a spread of offsets");

  std::size_t i_min = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (y[i] < y[i_min]) i_min = i;
  const double r_min = std::clamp(y[i_min], 1e-12, 1.0 - 1e-12);

  std::vector<double> p = {-std::log(r_min), x[i_min]};
  if (mode == WaistMode::Free) p.push_back(waist_m);

  auto model = [&](const double* q, double xi, double& f, double* g) {
    const double width = (mode == WaistMode::Free) ? q[2] : waist_m;
    const double u = xi - q[1];
    const double e = std::exp(-2.0 * u * u / (width * width));
    f = std::exp(-q[0] * e);
    g[0] = -f * e;
    g[1] = -q[0] * f * e * 4.0 * u / (width * width);
    if (mode == WaistMode::Free)
      g[2] = -q[0] * f * e * 4.0 * u * u / (width * width * width);
  };
  const auto lm = run_lm(p, x, y, w, model);
  if (!lm.converged) throw FitError("offset profile fit did not converge");
  if (mode == WaistMode::Free && !(p[2] > 0.0))
    throw FitError("offset profile fit left the physical domain");

  OffsetProfileFit out;
  out.depth = p[0];
  out.center_m = p[1];
  out.waist_m = (mode == WaistMode::Free) ? p[2] : waist_m;
  out.chi2 = lm.chi2;
  out.dof = static_cast<int>(points.size()) - static_cast<int>(np);
  return out;
}

PowerLinearityFit fit_power_linearity(const std::vector<RatioPoint>& points) {
  PowerLinearityFit out;
  std::vector<double> x, u, w;
  for (const auto& p : points) {
    if (!(p.ratio_err > 0.0))
      throw DataError("power linearity fit needs positive ratio errors");
    if (!(p.ratio > 0.0)) {
      ++out.rejected_points;
      continue;
    }
    x.push_back(p.abscissa);
    u.push_back(-std::log(p.ratio));
    const double su = p.ratio_err / p.ratio;
    w.push_back(1.0 / (su * su));
  }
  if (x.size() < 2)
    throw DataError("power linearity fit needs at least 2 usable points");

  double sw = 0.0, swx = 0.0, swxx = 0.0, swu = 0.0, swxu = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
    swxx += w[i] * x[i] * x[i];
    swu += w[i] * u[i];
    swxu += w[i] * x[i] * u[i];
  }
  const double det = sw * swxx - swx * swx;
  if (!(std::abs(det) > 0.0))
    throw DataError("power linearity fit needs a spread of powers");
  out.slope_per_w = (sw * swxu - swx * swu) / det;
  out.intercept = (swxx * swu - swx * swxu) / det;

  num::KahanSum c2;
  double p_max = x.front();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = u[i] - (out.intercept + out.slope_per_w * x[i]);
    c2.add(w[i] * r * r);
    p_max = std::max(p_max, x[i]);
  }
  out.chi2 = c2.value();
  out.dof = static_cast<int>(x.size()) - 2;
  out.max_minus_log = out.slope_per_w * p_max;
  return out;
}

ConstancyResult constancy_check(const std::vector<RatioPoint>& points) {
  if (points.size() < 2) throw DataError("constancy check needs at least 2 points");
  double sw = 0.0, swr = 0.0;
  for (const auto& p : points) {
    if (!(p.ratio_err > 0.0))
      throw DataError("constancy check needs positive ratio errors");
    const double wi = 1.0 / (p.ratio_err * p.ratio_err);
    sw += wi;
    swr += wi * p.ratio;
  }
  ConstancyResult out;
  out.weighted_mean = swr / sw;
  out.mean_err = 1.0 / std::sqrt(sw);
  num::KahanSum c2;
  for (const auto& p : points) {
    const double z = (p.ratio - out.weighted_mean) / p.ratio_err;
    c2.add(z * z);
  }
  out.chi2 = c2.value();
  out.dof = static_cast<int>(points.size()) - 1;
  out.consistent_95 = out.chi2 < num::chi_square_quantile(0.95, out.dof);
  return out;
}

}  // namespace recoil
