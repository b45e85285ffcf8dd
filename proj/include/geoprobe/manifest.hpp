#pragma once

// Run manifests: every output directory holds exactly one manifest.json describing the
// command that produced it.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace geoprobe::manifest {

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> inputs;   ///< path -> blake2b-256 hex
  std::map<std::string, std::string> outputs;  ///< file name inside the run dir -> hash
  std::string started_at;
  std::string finished_at;
};

inline constexpr const char* kManifestName = "manifest.json";

/// BLAKE2b-256 of the file contents, lowercase hex. Throws IoError.
std::string hash_file(const std::filesystem::path& path);
std::string hash_bytes(std::string_view bytes);

/// UTC, ISO 8601 with seconds.
std::string utc_now();

/// Creates the directory. An existing manifest from a different command is a ConfigError.
void prepare_output_dir(const std::filesystem::path& dir, const std::string& command);

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
RunManifest read_manifest(const std::filesystem::path& dir);

/// Hashes every regular file in dir except the manifest, records them and writes manifest.json.
void finalize(const std::filesystem::path& dir, RunManifest& m);

/// Writes text to a file, replacing it (IoError on failure).
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace geoprobe::manifest
