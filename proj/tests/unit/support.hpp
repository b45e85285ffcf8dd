#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

namespace testsupport {

inline constexpr double kRadius = 6371.0088;

// Great-circle distance from the angle between unit vectors (atan2 form), independent
// of the haversine formula under test.
inline double great_circle_km(double lat1, double lng1, double lat2, double lng2, double r = kRadius) {
  const double d2r = M_PI / 180.0;
  const double x1 = std::cos(lat1 * d2r) * std::cos(lng1 * d2r), y1 = std::cos(lat1 * d2r) * std::sin(lng1 * d2r),
               z1 = std::sin(lat1 * d2r);
  const double x2 = std::cos(lat2 * d2r) * std::cos(lng2 * d2r), y2 = std::cos(lat2 * d2r) * std::sin(lng2 * d2r),
               z2 = std::sin(lat2 * d2r);
  const double cx = y1 * z2 - z1 * y2, cy = z1 * x2 - x1 * z2, cz = x1 * y2 - y1 * x2;
  return r * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), x1 * x2 + y1 * y2 + z1 * z2);
}

/// Fresh directory under the gtest temp dir, unique per test.
inline std::filesystem::path fresh_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::path(::testing::TempDir()) / "geoprobe_tests" /
             (std::string(info->test_suite_name()) + "." + info->name() + "." + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace testsupport
