#pragma once

#include <cstddef>

#include "recoil/config.hpp"

namespace recoil {

/// Relative laser intensity sampled by a molecular beam displaced by
/// offset_y from the laser axis: exp(-2 offset_y^2 / waist_y^2) in (0, 1].
double offset_intensity_factor(double offset_y_m, double waist_y_m);

/// Mean number of photons absorbed while crossing the recoil laser:
/// sqrt(2/pi) * sigma_abs * lambda * P / (h c w_y v), scaled by the
/// off-axis intensity factor. Linear in sigma_abs and power,
/// proportional to 1/v and 1/w_y.
double mean_photon_number(const RecoilLaserSpec& laser, double sigma_abs_m2,
                          double velocity_mps);

/// Fringe displacement per absorbed photon: h D / (m v lambda), with D the
/// laser position downstream of grating 1. A momentum kick h/lambda there
/// moves the pattern at the third grating by (de Broglie wavelength /
/// laser wavelength) * D.
double recoil_shift(const MoleculeSpec& molecule, double wavelength_m,
                    double distance_m, double velocity_mps);

/// Contrast reduction for one velocity class and Poisson-distributed
/// photon numbers: R = exp(-n0 * (1 - cos(2 pi s / d))), in (0, 1].
double reduction_monochromatic(double n0, double shift_m, double period_m);

/// Large-distance limit of the velocity-averaged reduction, exp(-n0).
/// Valid only for laser positions far beyond the revival period.
double reduction_asymptotic(double n0);

/// Laser distance of the first contrast-reduction minimum,
/// d m v0 lambda / (2 h); the single-photon shift there is d/2.
double first_minimum_distance(const InterferometerSpec& interferometer,
                              const MoleculeSpec& molecule,
                              double wavelength_m, double v0_mps);

/// Distance period of the contrast revivals, twice the first minimum.
double revival_period(const InterferometerSpec& interferometer,
                      const MoleculeSpec& molecule, double wavelength_m,
                      double v0_mps);

struct VelocityAverageOptions {
  /// Requested relative accuracy of the averaged reduction factor
  /// (relative to max(result, 1e-3), so tiny results are handled with a
  /// matching absolute floor).
  double rel_tol = 1e-10;
  /// Extra initial bisections of every integration panel. The default
  /// grid already resolves the integrand; raising this exists to verify
  /// grid-refinement stability.
  int refine_factor = 1;
  /// Hard cap on integrand evaluations, guarding pathological configs.
  std::size_t max_evals = 4'000'000;
};

/// Velocity-averaged visibility reduction: modulus of the P(v)-weighted
/// mean of exp(-n0(v) * (1 - e^{i 2 pi s(v)/d})) over forward velocities.
/// The modulus is taken outside the average: each velocity class also
/// shifts the fringe phase, and only the ensemble amplitude is observed.
/// Monochromatic velocity models reduce exactly to
/// reduction_monochromatic. Throws QuadratureError (carrying the achieved
/// error estimate) if the tolerance cannot be met.
double reduction_velocity_averaged(const ExperimentConfig& config,
                                   double sigma_abs_m2,
                                   const VelocityAverageOptions& options = {});

}  // namespace recoil
