#pragma once

#include <string>
#include <variant>

namespace recoil {

struct MoleculeSpec {
  std::string name;
  double mass_kg = 0.0;
};

/// Recoil (depletion) laser geometry. Waists are 1/e^2 intensity radii.
/// waist_x_m is recorded for completeness but cancels out of the absorbed
/// photon rate: the peak intensity carries 1/(w_x w_y) while the transit
/// time through the Gaussian profile contributes w_x back.
struct RecoilLaserSpec {
  double wavelength_m = 0.0;  // lambda_k
  double power_w = 0.0;       // P_k
  double waist_y_m = 0.0;     // w_ky
  double waist_x_m = 0.0;     // w_kx
  double distance_m = 0.0;    // D, laser position downstream of grating 1
  double offset_y_m = 0.0;    // vertical displacement from the beam axis
};

struct InterferometerSpec {
  double grating_period_m = 0.0;           // d
  double grating_separation_m = 0.0;       // L
  double grating_laser_wavelength_m = 0.0; // metadata only
  double grating_laser_power_w = 0.0;      // metadata only
};

struct GaussianVelocity {
  double v0_mps = 0.0;
  double sigma_mps = 0.0;
};

struct MonochromaticVelocity {
  double v0_mps = 0.0;
};

using VelocityModel = std::variant<GaussianVelocity, MonochromaticVelocity>;

/// Most probable forward velocity of either model variant.
double central_velocity(const VelocityModel& model);

struct ExperimentConfig {
  MoleculeSpec molecule;
  RecoilLaserSpec recoil_laser;
  InterferometerSpec interferometer;
  VelocityModel velocity{MonochromaticVelocity{}};
  double baseline_visibility = 0.0;    // V
  double baseline_mean_rate_hz = 0.0;  // mu, detected molecules per second
};

/// Throws ConfigError naming the offending field when an invariant fails:
/// positive masses, periods, waists and velocities; 0 <= D < L;
/// 0 < baseline_visibility <= 1; baseline_mean_rate_hz > 0.
void validate(const ExperimentConfig& config);

}  // namespace recoil
