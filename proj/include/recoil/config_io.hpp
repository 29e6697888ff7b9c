#pragma once

#include <string>

#include "recoil/config.hpp"

namespace recoil {

/// Parses an experiment configuration from an INI-style file with
/// [molecule], [recoil_laser], [interferometer], [velocity] and [baseline]
/// sections. Quantity keys carry a unit suffix (wavelength_nm, mass_amu,
/// power_w, ...). Unknown keys, missing keys, duplicate keys and malformed
/// values throw ConfigError with the file and line. The parsed config is
/// validated before being returned.
ExperimentConfig load_config(const std::string& path);

/// Canonical text form: SI units only, 17 significant digits, stable key
/// order. Loading it reproduces the config bit-exactly; run manifests
/// digest this text.
std::string config_text(const ExperimentConfig& config);

/// Writes config_text atomically (temp file + rename).
void save_config(const std::string& path, const ExperimentConfig& config);

}  // namespace recoil
