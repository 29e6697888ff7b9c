#pragma once

#include <utility>
#include <vector>

#include "recoil/config.hpp"
#include "recoil/fringe.hpp"
#include "recoil/physics.hpp"

namespace recoil {

/// Measured visibility ratios against recoil-laser distance, tied to the
/// experiment configuration they were taken under.
struct ReductionCurve {
  std::vector<RatioPoint> points;  // abscissa = distance_m
  ExperimentConfig config;
};

/// Quadrature accuracy used inside fit loops. Chi-square evaluations need
/// errors well below the data errors, and the induced chi-square jitter
/// (about 2 z_i / err_i per point) must stay well under the 1e-6 agreement
/// guaranteed at the delta-chi2 = 1 interval endpoints.
inline constexpr VelocityAverageOptions kFitQuadrature{1e-8, 1, 4'000'000};

struct SigmaFitOptions {
  double sigma_max_m2 = 1e-19;
  VelocityAverageOptions quadrature = kFitQuadrature;
  double rel_err_power = 0.0;  // relative systematic on laser power
  double rel_err_waist = 0.0;  // relative systematic on the y waist
  int threads = -1;            // -1 = env/auto, 0 = auto, >0 = exact
};

struct SigmaFitResult {
  double sigma_abs_m2 = 0.0;
  double stat_err_lo_m2 = 0.0;  // sigma_abs - sigma(chi2_min + 1), left side
  double stat_err_hi_m2 = 0.0;
  double chi2_min = 0.0;
  int dof = 0;
  double systematic_err_m2 = 0.0;
  double n0_at_max_power = 0.0;  // mean photon number at the fitted sigma
  std::vector<std::pair<double, double>> fit_trace;  // (sigma, chi2) evals
};

/// Chi-square of the curve against the velocity-averaged model at a given
/// cross section. Points are evaluated in parallel; the sum is ordered and
/// compensated, so the value is independent of the thread count.
double chi_square(const ReductionCurve& curve, double sigma_abs_m2,
                  const SigmaFitOptions& options = {});

/// One-parameter fit of the absolute absorption cross section: golden
/// section minimum of chi_square over [0, sigma_max_m2] plus a delta chi2=1
/// interval. Throws DataError on unusable points, FitError when the minimum
/// sits on the sigma_max boundary.
SigmaFitResult fit_sigma(const ReductionCurve& curve,
                         const SigmaFitOptions& options = {});

/// First-order cross section from a single visibility ratio:
/// sigma = -sqrt(pi/8) h c w_y v / (P lambda) ln(ratio). Exact only for a
/// monochromatic beam at the first visibility minimum; biased low
/// elsewhere because slow molecules dominate the loss. The point's
/// abscissa (laser distance) is not used in the value; velocity_mps = 0
/// means the central velocity of the configured model.
double quick_sigma(const ExperimentConfig& config, const RatioPoint& point,
                   double velocity_mps = 0.0);

/// Relative systematic from laser power and waist calibration, scaled to
/// an absolute error on sigma.
double propagate_systematics(double sigma_abs_m2, double rel_err_power,
                             double rel_err_waist);

/// Model curve ratio(D) over equally spaced distances, evaluated in
/// parallel at the given quadrature accuracy.
std::vector<double> predict_curve(const ExperimentConfig& config,
                                  double sigma_abs_m2,
                                  const std::vector<double>& distances_m,
                                  const SigmaFitOptions& options = {});

}  // namespace recoil
