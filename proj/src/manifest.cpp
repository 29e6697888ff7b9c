#include "recoil/manifest.hpp"

#include <cstdio>
#include <ctime>

#include "json.hpp"

namespace recoil {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::string current_utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string tool_version() { return "recoil-sigma 1.0.0"; }

std::string to_json(const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["tool_version"] = manifest.tool_version;
  j["command"] = manifest.command;
  j["timestamp_utc"] = manifest.timestamp_utc;
  j["config_digest"] = manifest.config_digest;
  j["inputs"] = manifest.inputs;
  if (manifest.seed)
    j["seed"] = *manifest.seed;
  else
    j["seed"] = nullptr;
  return j.dump(2);
}

}  // namespace recoil
