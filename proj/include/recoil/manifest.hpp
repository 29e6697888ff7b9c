#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace recoil {

/// Provenance block embedded in every JSON result and written next to
/// simulated datasets. Enough to rerun the exact command.
struct RunManifest {
  std::string tool_version;
  std::string command;        // argv joined with spaces
  std::string timestamp_utc;  // ISO-8601, e.g. 2026-01-05T14:03:22Z
  std::string config_digest;  // 64-bit FNV-1a of the canonical config, hex
  std::vector<std::string> inputs;
  std::optional<std::uint64_t> seed;
};

/// FNV-1a 64-bit over the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

std::string current_utc_timestamp();

std::string tool_version();

/// JSON object text for the manifest (stable key order).
std::string to_json(const RunManifest& manifest);

}  // namespace recoil
