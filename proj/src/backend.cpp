#include "geoprobe/backend.hpp"

#include <cstdlib>
#include <unistd.h>

#include "geoprobe/error.hpp"

namespace geoprobe::backend {

std::string_view position_mode_name(PositionMode mode) noexcept {
  return mode == PositionMode::last_city_token ? "last_city_token" : "pooled";
}

PositionMode parse_position_mode(std::string_view name) {
  if (name == "last_city_token") return PositionMode::last_city_token;
  if (name == "pooled") return PositionMode::pooled;
  throw ConfigError("unknown position mode: " + std::string(name));
}

activations::ActivationSet TensorRef::load() const {
  auto set = activations::read_activations(path);
  if (set.n() != n || set.d() != d) {
    throw ShapeError(path.string() + " holds " + std::to_string(set.n()) + "x" + std::to_string(set.d()) +
                     ", declared " + std::to_string(n) + "x" + std::to_string(d));
  }
  return set;
}

std::filesystem::path ScratchSpace::default_dir() {
  if (const char* env = std::getenv("GEOPROBE_SCRATCH"); env && *env) return env;
  return std::filesystem::temp_directory_path() / ("geoprobe-" + std::to_string(::getpid()));
}

ScratchSpace::ScratchSpace() : ScratchSpace(default_dir()) {}

ScratchSpace::ScratchSpace(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create scratch directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path ScratchSpace::next(std::string_view stem) {
  const std::size_t id = counter_.fetch_add(1);
  return dir_ / (std::to_string(::getpid()) + "-" + std::to_string(id) + "-" + std::string(stem) + ".gact");
}

TensorRef write_tensor(ScratchSpace& scratch, std::string_view stem, const activations::ActivationSet& set) {
  const auto path = scratch.next(stem);
  activations::write_activations(set, path);
  return TensorRef{path, set.n(), set.d()};
}

}  // namespace geoprobe::backend
