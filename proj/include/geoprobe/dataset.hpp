#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/geodesy.hpp"

namespace geoprobe::dataset {

using geodesy::GeoPoint;

struct City {
  std::string name;
  std::string name_ascii;
  GeoPoint location;
  std::string admin_name;
  std::string country;
  std::string display_name;
};

struct CityCatalog {
  std::vector<City> cities;
  /// Retained countries, ranked by city count (descending) then name.
  std::vector<std::string> countries;
  std::uint64_t seed = 0;
  std::size_t dropped_rows = 0;        ///< unparsable coordinates
  std::size_t dropped_collisions = 0;  ///< display names still duplicated after concatenation

  std::size_t country_index(const std::string& country) const;  // throws LabelError
  const City& city(const std::string& display_name) const;      // throws LabelError
  std::vector<std::size_t> labels() const;                      // country index per city
};

struct CountryCentroid {
  std::string country;
  GeoPoint location;
};

enum class PromptTemplate { coords, country };

struct FoldAssignment {
  std::vector<std::size_t> fold_of;
  std::size_t k = 10;
  std::uint64_t seed = 0;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Reads a world-cities table (columns city, city_ascii, lat, lng, admin_name, country;
/// extra columns ignored) and keeps the top_k countries by city count.
CityCatalog load_catalog(const std::filesystem::path& csv_path, std::size_t top_k = 100,
                         std::uint64_t seed = 0);
CityCatalog parse_catalog(std::istream& csv, std::size_t top_k = 100, std::uint64_t seed = 0);

/// Arithmetic mean of member latitudes and longitudes, in catalog country order.
std::vector<CountryCentroid> country_centroids(const CityCatalog& catalog);

std::string build_prompt(const City& city, PromptTemplate tmpl);
std::string build_prompt(const std::string& display_name, PromptTemplate tmpl);

/// Inverse of build_prompt; returns an empty string when the prompt matches neither template.
std::string city_from_prompt(const std::string& prompt);

/// Seeded shuffle then round-robin assignment into k folds.
FoldAssignment make_folds(std::size_t n, std::size_t k = 10, std::uint64_t seed = 0);

/// n x 2 matrix of (lat, lng) aligned with catalog.cities.
Eigen::MatrixXd geo_targets(const CityCatalog& catalog);

std::string catalog_to_json(const CityCatalog& catalog);
CityCatalog catalog_from_json(const std::string& text);
void write_catalog(const CityCatalog& catalog, const std::filesystem::path& path);
CityCatalog read_catalog(const std::filesystem::path& path);

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace geoprobe::dataset
