#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace idmfit {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// UTC ISO-8601 time; SOURCE_DATE_EPOCH, when set, replaces the clock so
/// reruns produce identical manifests.
std::string timestamp_now();

/// Provenance record written as manifest.json into every output directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::optional<std::uint64_t> seed;
  /// Resolved settings of the run; hashed into settings_sha256.
  nlohmann::ordered_json settings;
  struct FileHash {
    std::string path;
    std::string sha256;
  };
  std::optional<FileHash> config;
  std::vector<FileHash> inputs;
  std::vector<FileHash> outputs;
  std::string started_at;
  std::string finished_at;

  nlohmann::ordered_json to_json() const;
};

/// Writes `bytes` to dir/name, records it as an output and returns the path.
/// Throws idm::IoError on failure.
std::filesystem::path write_output(RunManifest& manifest, const std::filesystem::path& dir, const std::string& name,
                                   const std::string& bytes);

/// Reads a file, recording its hash as an input (or as the config).
std::string read_input(RunManifest& manifest, const std::filesystem::path& path, bool is_config = false);

/// Writes manifest.json (not listed among its own outputs).
void write_manifest(RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace idmfit
