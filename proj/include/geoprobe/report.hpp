#pragma once

// Static figures (deterministic SVG) and CSV tables built from run artifacts.

#include <filesystem>
#include <string>
#include <vector>

namespace geoprobe::report {

struct MapPoint {
  std::string group;  ///< colour key, usually the country
  double true_lat = 0.0, true_lng = 0.0;
  double pred_lat = 0.0, pred_lng = 0.0;
};

struct SignedMarker {
  std::string label;
  double lat = 0.0, lng = 0.0;
  double value = 0.0;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Equirectangular scatter, 2 px per degree: hollow circles at true positions, filled
/// dots at predictions, coloured by group in first-appearance order.
std::string prediction_map_svg(const std::vector<MapPoint>& points, const std::string& title);

/// Circles with area proportional to |value|; red for positive, blue for negative.
std::string signed_map_svg(const std::vector<SignedMarker>& markers, const std::string& title);

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

/// Colour of the i-th group.
std::string palette(std::size_t i);

/// Reads a CSV file with a header row into records keyed by column name. Throws
/// ReportError naming the file when it is missing or has no data rows.
std::vector<std::vector<std::string>> read_csv_table(const std::filesystem::path& path,
                                                     const std::vector<std::string>& columns);

/// Builds figures and tables for one run directory into out_dir; returns written file names.
std::vector<std::string> generate_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace geoprobe::report
