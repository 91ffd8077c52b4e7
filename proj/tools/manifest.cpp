#include "manifest.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "idm/csv.hpp"
#include "idm/error.hpp"

namespace idmfit {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw idm::IoError("SHA-256 computation failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string timestamp_now() {
  std::int64_t seconds = 0;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    try {
      seconds = std::stoll(sde);
    } catch (const std::exception&) {
      throw idm::ConfigError(fmt::format("SOURCE_DATE_EPOCH '{}' is not an integer", sde));
    }
  } else {
    seconds = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  }
  const std::chrono::sys_seconds t{std::chrono::seconds(seconds)};
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", t);
}

nlohmann::ordered_json RunManifest::to_json() const {
  using nlohmann::ordered_json;
  auto files = [](const std::vector<FileHash>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  ordered_json j;
  j["tool"] = "idmfit";
  j["version"] = IDMFIT_VERSION;
  j["command"] = command;
  j["arguments"] = arguments;
  j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  j["config"] = config ? ordered_json{{"path", config->path}, {"sha256", config->sha256}} : ordered_json(nullptr);
  j["settings"] = settings;
  j["settings_sha256"] = sha256_hex(settings.dump());
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw idm::IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw idm::IoError(fmt::format("error while writing '{}'", path.string()));
}

}  // namespace

std::filesystem::path write_output(RunManifest& manifest, const std::filesystem::path& dir, const std::string& name,
                                   const std::string& bytes) {
  const auto path = dir / name;
  write_file(path, bytes);
  manifest.outputs.push_back({name, sha256_hex(bytes)});
  return path;
}

std::string read_input(RunManifest& manifest, const std::filesystem::path& path, bool is_config) {
  const std::string bytes = idm::csv::read_text(path.string());
  RunManifest::FileHash h{path.generic_string(), sha256_hex(bytes)};
  if (is_config) manifest.config = h;
  else manifest.inputs.push_back(h);
  return bytes;
}

void write_manifest(RunManifest& manifest, const std::filesystem::path& dir) {
  manifest.finished_at = timestamp_now();
  write_file(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

}  // namespace idmfit
