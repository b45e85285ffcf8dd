#include "geoprobe/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "geoprobe/error.hpp"

namespace geoprobe::dataset {
namespace {

constexpr std::array<const char*, 6> kRequiredColumns = {"city",       "city_ascii", "lat",
                                                         "lng",        "admin_name", "country"};
constexpr const char* kCoordsPrefix = "The latitude and longitude of ";
constexpr const char* kCoordsSuffix = " is";
constexpr const char* kCountrySuffix = " is located in the country of";
constexpr int kCatalogVersion = 1;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::size_t CityCatalog::country_index(const std::string& country) const {
  const auto it = std::find(countries.begin(), countries.end(), country);
  if (it == countries.end()) throw LabelError("unknown country: " + country);
  return static_cast<std::size_t>(it - countries.begin());
}

const City& CityCatalog::city(const std::string& display_name) const {
  const auto it = std::find_if(cities.begin(), cities.end(),
                               [&](const City& c) { return c.display_name == display_name; });
  if (it == cities.end()) throw LabelError("unknown city: " + display_name);
  return *it;
}

std::vector<std::size_t> CityCatalog::labels() const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < countries.size(); ++i) index.emplace(countries[i], i);
  std::vector<std::size_t> out;
  out.reserve(cities.size());
  for (const auto& c : cities) {
    const auto it = index.find(c.country);
    if (it == index.end()) throw LabelError("city " + c.display_name + " has unknown country " + c.country);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

CityCatalog parse_catalog(std::istream& csv, std::size_t top_k, std::uint64_t seed) {
  std::string line;
  if (!std::getline(csv, line)) throw SchemaError("empty CSV: no header row");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(trim(header[i]), i);
  std::array<std::size_t, kRequiredColumns.size()> idx{};
  for (std::size_t i = 0; i < kRequiredColumns.size(); ++i) {
    const auto it = column.find(kRequiredColumns[i]);
    if (it == column.end()) throw SchemaError(std::string("missing column: ") + kRequiredColumns[i]);
    idx[i] = it->second;
  }
  const std::size_t min_fields = *std::max_element(idx.begin(), idx.end()) + 1;

  CityCatalog catalog;
  catalog.seed = seed;
  std::vector<City> rows;
  while (std::getline(csv, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < min_fields) {
      ++catalog.dropped_rows;
      continue;
    }
    const auto lat = parse_double(fields[idx[2]]);
    const auto lng = parse_double(fields[idx[3]]);
    const std::string country = trim(fields[idx[5]]);
    const std::string name = trim(fields[idx[0]]);
    if (!lat || !lng || *lat < -90.0 || *lat > 90.0 || country.empty() || name.empty()) {
      ++catalog.dropped_rows;
      continue;
    }
    City city;
    city.name = name;
    city.name_ascii = trim(fields[idx[1]]);
    city.location = geodesy::canonicalize(*lat, *lng);
    city.admin_name = trim(fields[idx[4]]);
    city.country = country;
    rows.push_back(std::move(city));
  }

  std::map<std::string, std::size_t> count;
  for (const auto& c : rows) ++count[c.country];
  std::vector<std::pair<std::string, std::size_t>> ranked(count.begin(), count.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  std::unordered_set<std::string> kept;
  for (const auto& [country, n] : ranked) kept.insert(country);

  std::erase_if(rows, [&](const City& c) { return !kept.contains(c.country); });

  std::unordered_map<std::string, std::size_t> name_count;
  for (const auto& c : rows) ++name_count[c.name];
  std::unordered_set<std::string> seen;
  std::map<std::string, std::size_t> per_country;
  for (auto& c : rows) {
    c.display_name = name_count[c.name] > 1 && !c.admin_name.empty() ? c.name + ", " + c.admin_name : c.name;
    if (!seen.insert(c.display_name).second) {
      ++catalog.dropped_collisions;
      continue;
    }
    ++per_country[c.country];
    catalog.cities.push_back(std::move(c));
  }
  for (const auto& [country, n] : ranked)
    if (per_country.contains(country)) catalog.countries.push_back(country);

  if (catalog.cities.empty()) throw EmptyCatalog("no cities retained");
  return catalog;
}

CityCatalog load_catalog(const std::filesystem::path& csv_path, std::size_t top_k, std::uint64_t seed) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + csv_path.string());
  return parse_catalog(in, top_k, seed);
}

std::vector<CountryCentroid> country_centroids(const CityCatalog& catalog) {
  const std::size_t c = catalog.countries.size();
  std::vector<double> lat(c, 0.0), lng(c, 0.0);
  std::vector<std::size_t> n(c, 0);
  const auto labels = catalog.labels();
  for (std::size_t i = 0; i < catalog.cities.size(); ++i) {
    lat[labels[i]] += catalog.cities[i].location.lat;
    lng[labels[i]] += catalog.cities[i].location.lng;
    ++n[labels[i]];
  }
  std::vector<CountryCentroid> out;
  out.reserve(c);
  for (std::size_t k = 0; k < c; ++k) {
    if (n[k] == 0) throw MissingCountry("country without cities: " + catalog.countries[k]);
    const double m = static_cast<double>(n[k]);
    out.push_back({catalog.countries[k], geodesy::canonicalize(lat[k] / m, lng[k] / m)});
  }
  return out;
}

std::string build_prompt(const std::string& display_name, PromptTemplate tmpl) {
  if (display_name.empty()) throw InvalidCity("empty display name");
  switch (tmpl) {
    case PromptTemplate::coords: return kCoordsPrefix + display_name + kCoordsSuffix;
    case PromptTemplate::country: return display_name + kCountrySuffix;
  }
  throw InvalidCity("unknown prompt template");
}

std::string build_prompt(const City& city, PromptTemplate tmpl) {
  return build_prompt(city.display_name, tmpl);
}

std::string city_from_prompt(const std::string& prompt) {
  const std::string prefix = kCoordsPrefix;
  if (ends_with(prompt, kCountrySuffix)) return prompt.substr(0, prompt.size() - std::string(kCountrySuffix).size());
  if (prompt.rfind(prefix, 0) == 0 && ends_with(prompt, kCoordsSuffix)) {
    const std::size_t len = prompt.size() - prefix.size() - std::string(kCoordsSuffix).size();
    return prompt.substr(prefix.size(), len);
  }
  return {};
}

FoldAssignment make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw TooFewSamples("fold count must be positive");
  if (n < k) throw TooFewSamples(std::to_string(n) + " samples for " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  folds.fold_of.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) folds.fold_of[order[i]] = i % k;
  return folds;
}

Eigen::MatrixXd geo_targets(const CityCatalog& catalog) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(catalog.cities.size()), 2);
  for (std::size_t i = 0; i < catalog.cities.size(); ++i) {
    y(static_cast<Eigen::Index>(i), 0) = catalog.cities[i].location.lat;
    y(static_cast<Eigen::Index>(i), 1) = catalog.cities[i].location.lng;
  }
  return y;
}

std::string catalog_to_json(const CityCatalog& catalog) {
  nlohmann::json j;
  j["format"] = "geoprobe.catalog";
  j["version"] = kCatalogVersion;
  j["seed"] = catalog.seed;
  j["dropped_rows"] = catalog.dropped_rows;
  j["dropped_collisions"] = catalog.dropped_collisions;
  j["countries"] = catalog.countries;
  auto& cities = j["cities"] = nlohmann::json::array();
  for (const auto& c : catalog.cities) {
    cities.push_back({{"city", c.name},
                      {"city_ascii", c.name_ascii},
                      {"lat", c.location.lat},
                      {"lng", c.location.lng},
                      {"admin_name", c.admin_name},
                      {"country", c.country},
                      {"display_name", c.display_name}});
  }
  return j.dump(2) + "\n";
}

CityCatalog catalog_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("catalog JSON: ") + e.what());
  }
  if (j.value("format", "") != "geoprobe.catalog") throw FormatError("not a catalog file");
  if (j.value("version", 0) != kCatalogVersion) throw FormatError("unsupported catalog version");
  CityCatalog catalog;
  try {
    catalog.seed = j.at("seed").get<std::uint64_t>();
    catalog.dropped_rows = j.at("dropped_rows").get<std::size_t>();
    catalog.dropped_collisions = j.at("dropped_collisions").get<std::size_t>();
    catalog.countries = j.at("countries").get<std::vector<std::string>>();
    for (const auto& c : j.at("cities")) {
      City city;
      city.name = c.at("city").get<std::string>();
      city.name_ascii = c.at("city_ascii").get<std::string>();
      city.location = geodesy::canonicalize(c.at("lat").get<double>(), c.at("lng").get<double>());
      city.admin_name = c.at("admin_name").get<std::string>();
      city.country = c.at("country").get<std::string>();
      city.display_name = c.at("display_name").get<std::string>();
      catalog.cities.push_back(std::move(city));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("catalog JSON: ") + e.what());
  }
  return catalog;
}

void write_catalog(const CityCatalog& catalog, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << catalog_to_json(catalog);
}

CityCatalog read_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return catalog_from_json(buffer.str());
}

}  // namespace geoprobe::dataset
