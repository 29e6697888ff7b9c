#include "recoil/config.hpp"

#include "recoil/errors.hpp"

namespace recoil {

double central_velocity(const VelocityModel& model) {
  return std::visit([](const auto& m) { return m.v0_mps; }, model);
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void validate(const ExperimentConfig& config) {
  require(config.molecule.mass_kg > 0.0, "molecule.mass must be > 0");
  require(config.recoil_laser.wavelength_m >= 0.0,
          "recoil_laser.wavelength must be >= 0");
  require(config.recoil_laser.power_w >= 0.0,
          "recoil_laser.power must be >= 0");
  require(config.recoil_laser.waist_y_m > 0.0,
          "recoil_laser.waist_y must be > 0");
  require(config.recoil_laser.waist_x_m > 0.0,
          "recoil_laser.waist_x must be > 0");
  require(config.interferometer.grating_period_m > 0.0,
          "interferometer.grating_period must be > 0");
  require(config.interferometer.grating_separation_m > 0.0,
          "interferometer.grating_separation must be > 0");
  require(config.recoil_laser.distance_m >= 0.0 &&
              config.recoil_laser.distance_m <
                  config.interferometer.grating_separation_m,
          "recoil_laser.distance must lie in [0, grating_separation)");
  if (const auto* g = std::get_if<GaussianVelocity>(&config.velocity)) {
    require(g->v0_mps > 0.0, "velocity.v0 must be > 0");
    require(g->sigma_mps > 0.0, "velocity.sigma must be > 0");
  } else {
    require(std::get<MonochromaticVelocity>(config.velocity).v0_mps > 0.0,
            "velocity.v0 must be > 0");
  }
  require(config.baseline_visibility > 0.0 &&
              config.baseline_visibility <= 1.0,
          "baseline.visibility must lie in (0, 1]");
  require(config.baseline_mean_rate_hz > 0.0,
          "baseline.mean_rate must be > 0");
}

}  // namespace recoil
