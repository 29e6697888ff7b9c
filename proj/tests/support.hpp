#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "recoil/config.hpp"
#include "recoil/constants.hpp"

namespace testsup {

/// The C70 reference setup used throughout the tests, built in code so
/// library tests do not depend on the fixture parser.
inline recoil::ExperimentConfig reference_config() {
  recoil::ExperimentConfig cfg;
  cfg.molecule = {"C70", 840.0 * recoil::constants.atomic_mass_unit};
  cfg.recoil_laser = {532.2e-9, 17.4, 1.23e-3, 1.23e-3, 0.035, 0.0};
  cfg.interferometer = {266e-9, 0.105, 532e-9, 1.0};
  cfg.velocity = recoil::GaussianVelocity{210.3, 38.4};
  cfg.baseline_visibility = 0.15;
  cfg.baseline_mean_rate_hz = 300.0;
  return cfg;
}

inline std::string fixture(const std::string& name) {
  return std::string(RECOIL_FIXTURE_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Subset JSON-schema checker covering what the shipped schemas use:
/// type (single or list), const, enum, required, properties,
/// additionalProperties: false, items. Returns human-readable violations.
inline void schema_errors(const nlohmann::json& value,
                          const nlohmann::json& schema,
                          const std::string& path,
                          std::vector<std::string>& out) {
  auto type_ok = [](const nlohmann::json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "number") return v.is_number();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    return false;
  };
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& alt : t) ok = ok || type_ok(value, alt);
    } else {
      ok = type_ok(value, t);
    }
    if (!ok) out.push_back(path + ": wrong type, got " + value.dump());
  }
  if (schema.contains("const") && value != schema["const"])
    out.push_back(path + ": expected " + schema["const"].dump() + ", got " +
                  value.dump());
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& alt : schema["enum"]) ok = ok || (value == alt);
    if (!ok) out.push_back(path + ": " + value.dump() + " not in enum");
  }
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!value.contains(key.get<std::string>()))
          out.push_back(path + ": missing required key " +
                        key.get<std::string>());
    const bool closed = schema.contains("additionalProperties") &&
                        schema["additionalProperties"].is_boolean() &&
                        !schema["additionalProperties"].get<bool>();
    for (const auto& [key, sub] : value.items()) {
      if (schema.contains("properties") && schema["properties"].contains(key))
        schema_errors(sub, schema["properties"][key], path + "." + key, out);
      else if (closed)
        out.push_back(path + ": unexpected key " + key);
    }
  }
  if (value.is_array() && schema.contains("items"))
    for (std::size_t i = 0; i < value.size(); ++i)
      schema_errors(value[i], schema["items"],
                    path + "[" + std::to_string(i) + "]", out);
}

inline std::vector<std::string> validate_against_schema(
    const nlohmann::json& value, const std::string& schema_name) {
  const std::string text =
      read_file(std::string(RECOIL_SCHEMA_DIR) + "/" + schema_name);
  const auto schema = nlohmann::json::parse(text);
  std::vector<std::string> out;
  schema_errors(value, schema, "$", out);
  return out;
}

}  // namespace testsup
