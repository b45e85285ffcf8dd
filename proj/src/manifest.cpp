#include "geoprobe/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <sodium.h>

#include "geoprobe/error.hpp"

namespace geoprobe::manifest {

namespace {

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw IoError("libsodium failed to initialize");
}

std::string to_hex(const unsigned char* data, std::size_t n) {
  std::string out(n * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), data, n);
  out.pop_back();
  return out;
}

}  // namespace

std::string hash_bytes(std::string_view bytes) {
  ensure_sodium();
  unsigned char digest[32];
  crypto_generichash(digest, sizeof digest, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                     nullptr, 0);
  return to_hex(digest, sizeof digest);
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  ensure_sodium();
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, 32);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = in.gcount();
    if (got > 0) crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(buf), static_cast<unsigned long long>(got));
  }
  unsigned char digest[32];
  crypto_generichash_final(&state, digest, sizeof digest);
  return to_hex(digest, sizeof digest);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void prepare_output_dir(const std::filesystem::path& dir, const std::string& command) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (std::filesystem::exists(dir / kManifestName)) {
    const auto existing = read_manifest(dir);
    if (existing.command != command) {
      throw ConfigError(dir.string() + " already holds output of '" + existing.command + "'; use a new directory");
    }
  }
}

std::string manifest_to_json(const RunManifest& m) {
  const nlohmann::json j = {{"format", "geoprobe.manifest"},
                            {"version", 1},
                            {"command", m.command},
                            {"argv", m.argv},
                            {"config", m.config},
                            {"seeds", m.seeds},
                            {"inputs", m.inputs},
                            {"outputs", m.outputs},
                            {"started_at", m.started_at},
                            {"finished_at", m.finished_at}};
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "geoprobe.manifest") throw SchemaError("not a geoprobe manifest");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.value("config", nlohmann::json::object());
    m.seeds = j.value("seeds", nlohmann::json::object());
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest read_manifest(const std::filesystem::path& dir) {
  return manifest_from_json(read_text(dir / kManifestName));
}

void finalize(const std::filesystem::path& dir, RunManifest& m) {
  m.outputs.clear();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == kManifestName) continue;
    m.outputs[entry.path().filename().string()] = hash_file(entry.path());
  }
  m.finished_at = utc_now();
  write_text(dir / kManifestName, manifest_to_json(m));
}

}  // namespace geoprobe::manifest
