#include "recoil/config_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "recoil/constants.hpp"
#include "recoil/errors.hpp"

namespace recoil {

namespace {

enum class Dim { Length, Mass, Power, Velocity, Rate, Plain, Text };

struct Suffix {
  const char* name;
  double factor;
};

const std::vector<Suffix>& suffixes(Dim dim) {
  static const std::vector<Suffix> length = {
      {"_nm", 1e-9}, {"_um", 1e-6}, {"_mm", 1e-3}, {"_cm", 1e-2}, {"_m", 1.0}};
  static const std::vector<Suffix> mass = {
      {"_amu", constants.atomic_mass_unit}, {"_kg", 1.0}};
  static const std::vector<Suffix> power = {
      {"_mw", 1e-3}, {"_w", 1.0}, {"_kw", 1e3}};
  static const std::vector<Suffix> velocity = {{"_mps", 1.0}};
  static const std::vector<Suffix> rate = {{"_hz", 1.0}, {"_per_s", 1.0}};
  static const std::vector<Suffix> plain = {{"", 1.0}};
  switch (dim) {
    case Dim::Length: return length;
    case Dim::Mass: return mass;
    case Dim::Power: return power;
    case Dim::Velocity: return velocity;
    case Dim::Rate: return rate;
    default: return plain;
  }
}

struct Field {
  const char* section;
  const char* base;  // key stem; the unit suffix is appended by the user
  Dim dim;
  bool required;
  double* number;       // for numeric fields
  std::string* text;    // for text fields
};

struct Entry {
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open configuration file", path);

  // First pass: raw section/key/value triples with line numbers.
  std::map<std::string, std::map<std::string, Entry>> raw;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ConfigError("malformed section header", path, line_no);
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty())
        throw ConfigError("empty section name", path, line_no);
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value'", path, line_no);
    if (section.empty())
      throw ConfigError("key outside any [section]", path, line_no);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", path, line_no);
    if (value.empty())
      throw ConfigError("empty value for '" + key + "'", path, line_no);
    auto [it, inserted] = raw[section].emplace(key, Entry{value, line_no});
    if (!inserted)
      throw ConfigError("duplicate key '" + key + "' (first at line " +
                            std::to_string(it->second.line) + ")",
                        path, line_no);
  }

  ExperimentConfig cfg;
  std::string model = "gaussian";
  double v0 = 0.0, v_sigma = 0.0;
  bool have_v_sigma = false;

  const std::vector<Field> fields = {
      {"molecule", "name", Dim::Text, false, nullptr, &cfg.molecule.name},
      {"molecule", "mass", Dim::Mass, true, &cfg.molecule.mass_kg, nullptr},
      {"recoil_laser", "wavelength", Dim::Length, true,
       &cfg.recoil_laser.wavelength_m, nullptr},
      {"recoil_laser", "power", Dim::Power, true, &cfg.recoil_laser.power_w,
       nullptr},
      {"recoil_laser", "waist_y", Dim::Length, true,
       &cfg.recoil_laser.waist_y_m, nullptr},
      {"recoil_laser", "waist_x", Dim::Length, true,
       &cfg.recoil_laser.waist_x_m, nullptr},
      {"recoil_laser", "distance", Dim::Length, true,
       &cfg.recoil_laser.distance_m, nullptr},
      {"recoil_laser", "offset_y", Dim::Length, false,
       &cfg.recoil_laser.offset_y_m, nullptr},
      {"interferometer", "grating_period", Dim::Length, true,
       &cfg.interferometer.grating_period_m, nullptr},
      {"interferometer", "grating_separation", Dim::Length, true,
       &cfg.interferometer.grating_separation_m, nullptr},
      {"interferometer", "grating_laser_wavelength", Dim::Length, true,
       &cfg.interferometer.grating_laser_wavelength_m, nullptr},
      {"interferometer", "grating_laser_power", Dim::Power, true,
       &cfg.interferometer.grating_laser_power_w, nullptr},
      {"velocity", "model", Dim::Text, false, nullptr, &model},
      {"velocity", "v0", Dim::Velocity, true, &v0, nullptr},
      {"velocity", "sigma", Dim::Velocity, false, &v_sigma, nullptr},
      {"baseline", "visibility", Dim::Plain, true, &cfg.baseline_visibility,
       nullptr},
      {"baseline", "mean_rate", Dim::Rate, true, &cfg.baseline_mean_rate_hz,
       nullptr},
  };

  // Match every raw key to a field; reject leftovers below.
  std::map<std::string, std::map<std::string, bool>> consumed;
  for (const auto& field : fields) {
    const auto sec = raw.find(field.section);
    const Entry* found = nullptr;
    std::string found_key;
    if (sec != raw.end()) {
      for (const auto& [key, entry] : sec->second) {
        if (key.rfind(field.base, 0) != 0) continue;
        const std::string tail = key.substr(std::strlen(field.base));
        bool matched = false;
        double factor = 1.0;
        for (const auto& sfx : suffixes(field.dim)) {
          if (tail == sfx.name) {
            matched = true;
            factor = sfx.factor;
            break;
          }
        }
        if (!matched) {
          // A bare stem with the wrong/missing unit is a unit error, not
          // an unknown key; suffixed stems of other fields fall through.
          if (tail.empty() || (!tail.empty() && tail[0] == '_' &&
                               field.dim != Dim::Text &&
                               field.dim != Dim::Plain)) {
            bool other_field = false;
            for (const auto& o : fields)
              if (&o != &field && sec->first == o.section &&
                  key.rfind(o.base, 0) == 0 &&
                  std::strlen(o.base) > std::strlen(field.base))
                other_field = true;
            if (!other_field)
              throw ConfigError("key '" + key + "' has no valid unit for " +
                                    field.base,
                                path, entry.line);
          }
          continue;
        }
        if (found)
          throw ConfigError("duplicate key '" + key + "' for " + field.base +
                                " (also given as '" + found_key + "')",
                            path, entry.line);
        found = &entry;
        found_key = key;
        if (field.number) {
          errno = 0;
          char* end = nullptr;
          const double value = std::strtod(entry.value.c_str(), &end);
          if (end != entry.value.c_str() + entry.value.size() ||
              (errno == ERANGE && !std::isfinite(value)))
            throw ConfigError("not a number: '" + entry.value + "'", path,
                              entry.line);
          *field.number = value * factor;
          if (field.base == std::string("sigma")) have_v_sigma = true;
        } else {
          *field.text = entry.value;
        }
      }
    }
    if (field.required && !found)
      throw ConfigError(std::string("missing key ") + field.section + "." +
                            field.base,
                        path);
    if (found) consumed[field.section][found_key] = true;
  }

  for (const auto& [sec, entries] : raw)
    for (const auto& [key, entry] : entries) {
      if (sec != "molecule" && sec != "recoil_laser" &&
          sec != "interferometer" && sec != "velocity" && sec != "baseline")
        throw ConfigError("unknown section [" + sec + "]", path, entry.line);
      if (!consumed[sec].count(key))
        throw ConfigError("unknown key '" + key + "' in [" + sec + "]", path,
                          entry.line);
    }

  if (model == "gaussian") {
    if (!have_v_sigma)
      throw ConfigError("missing key velocity.sigma (gaussian model)", path);
    cfg.velocity = GaussianVelocity{v0, v_sigma};
  } else if (model == "monochromatic") {
    if (have_v_sigma)
      throw ConfigError(
          "velocity.sigma is not a monochromatic-model parameter", path,
          raw["velocity"].count("sigma_mps") ? raw["velocity"]["sigma_mps"].line
                                             : 0);
    cfg.velocity = MonochromaticVelocity{v0};
  } else {
    throw ConfigError("velocity.model must be gaussian or monochromatic",
                      path);
  }

  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), path);
  }
  return cfg;
}

std::string config_text(const ExperimentConfig& config) {
  validate(config);
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "[molecule]\n";
  if (!config.molecule.name.empty())
    out << "name = " << config.molecule.name << "\n";
  out << "mass_kg = " << num(config.molecule.mass_kg) << "\n\n";
  out << "[recoil_laser]\n"
      << "wavelength_m = " << num(config.recoil_laser.wavelength_m) << "\n"
      << "power_w = " << num(config.recoil_laser.power_w) << "\n"
      << "waist_y_m = " << num(config.recoil_laser.waist_y_m) << "\n"
      << "waist_x_m = " << num(config.recoil_laser.waist_x_m) << "\n"
      << "distance_m = " << num(config.recoil_laser.distance_m) << "\n"
      << "offset_y_m = " << num(config.recoil_laser.offset_y_m) << "\n\n";
  out << "[interferometer]\n"
      << "grating_period_m = " << num(config.interferometer.grating_period_m)
      << "\n"
      << "grating_separation_m = "
      << num(config.interferometer.grating_separation_m) << "\n"
      << "grating_laser_wavelength_m = "
      << num(config.interferometer.grating_laser_wavelength_m) << "\n"
      << "grating_laser_power_w = "
      << num(config.interferometer.grating_laser_power_w) << "\n\n";
  out << "[velocity]\n";
  if (const auto* g = std::get_if<GaussianVelocity>(&config.velocity)) {
    out << "model = gaussian\n"
        << "v0_mps = " << num(g->v0_mps) << "\n"
        << "sigma_mps = " << num(g->sigma_mps) << "\n\n";
  } else {
    out << "model = monochromatic\n"
        << "v0_mps = "
        << num(std::get<MonochromaticVelocity>(config.velocity).v0_mps)
        << "\n\n";
  }
  out << "[baseline]\n"
      << "visibility = " << num(config.baseline_visibility) << "\n"
      << "mean_rate_hz = " << num(config.baseline_mean_rate_hz) << "\n";
  return out.str();
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  const std::string text = config_text(config);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot open for writing", tmp);
    file << text;
    file.flush();
    if (!file) throw ConfigError("write failed", tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw ConfigError(std::string("cannot replace file: ") +
                          std::strerror(errno),
                      path);
  }
}

}  // namespace recoil
