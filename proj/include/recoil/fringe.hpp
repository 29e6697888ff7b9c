#pragma once

#include <map>
#include <string>
#include <vector>

namespace recoil {

/// One lateral scan of the third grating: counts per dwell at each position.
struct FringeScan {
  std::vector<double> positions_m;
  std::vector<long long> counts;
  double dwell_s = 0.0;
  std::map<std::string, std::string> metadata;
};

/// Throws DataError unless positions/counts have equal length >= 8,
/// positions are strictly increasing, counts are non-negative and
/// dwell_s > 0.
void validate(const FringeScan& scan);

/// Sinusoid fit of a fringe scan: rate(x) = mu + A cos(2 pi x / d + phi).
struct VisibilityResult {
  double mean_rate_hz = 0.0;   // mu
  double amplitude_hz = 0.0;   // A
  double phase_rad = 0.0;      // phi, wrapped to (-pi, pi]
  double visibility = 0.0;     // V = A / mu
  double visibility_err = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double period_m = 0.0;  // input period, or the fitted one in free mode
};

enum class PeriodMode { Fixed, Free };

/// Weighted least-squares sinusoid fit with Poisson rate errors
/// sqrt(max(count,1))/dwell. Fixed mode fits (mu, A, phi) linearly at the
/// given period; free mode also floats the period, initialized at period_m.
/// Throws DataError when the scan spans less than one period, FitError on
/// non-convergence or a fitted visibility above 1.
VisibilityResult extract_visibility(const FringeScan& scan, double period_m,
                                    PeriodMode mode = PeriodMode::Fixed);

/// One point of a visibility-ratio dataset; abscissa is the swept quantity
/// (laser offset in m, laser distance in m, or laser power in W).
struct RatioPoint {
  double abscissa = 0.0;
  double ratio = 0.0;
  double ratio_err = 0.0;
};

/// ratio = perturbed.visibility / reference.visibility with independent
/// relative errors added in quadrature. Throws FitError when the reference
/// visibility is not positive.
RatioPoint visibility_ratio(const VisibilityResult& perturbed,
                            const VisibilityResult& reference,
                            double abscissa = 0.0);

enum class WaistMode { Fixed, Free };

struct OffsetProfileFit {
  double center_m = 0.0;   // y0
  double depth = 0.0;      // n_eff
  double waist_m = 0.0;    // w (input value in fixed mode)
  double chi2 = 0.0;
  int dof = 0;
};

/// Weighted fit of ratio(y) = exp(-n_eff exp(-2 (y-y0)^2 / w^2)) over a
/// laser-offset scan; w is held at waist_m or floated per mode.
OffsetProfileFit fit_offset_profile(const std::vector<RatioPoint>& points,
                                    double waist_m,
                                    WaistMode mode = WaistMode::Fixed);

struct PowerLinearityFit {
  double slope_per_w = 0.0;
  double intercept = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double max_minus_log = 0.0;  // slope * max fitted power
  int rejected_points = 0;     // non-positive ratios skipped
};

/// Weighted linear fit of -ln(ratio) against laser power. Points with
/// non-positive ratio are skipped and counted, not silently dropped.
PowerLinearityFit fit_power_linearity(const std::vector<RatioPoint>& points);

struct ConstancyResult {
  double weighted_mean = 0.0;
  double mean_err = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  bool consistent_95 = false;  // chi2 below the 95th percentile at dof
};

/// Inverse-variance weighted mean of the ratios and a chi-square test of
/// constancy about it.
ConstancyResult constancy_check(const std::vector<RatioPoint>& points);

}  // namespace recoil
