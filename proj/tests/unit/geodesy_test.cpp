#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "geoprobe/error.hpp"
#include "geoprobe/geodesy.hpp"
#include "support.hpp"

using namespace geoprobe;
using geodesy::GeoPoint;
using testsupport::great_circle_km;
using testsupport::kRadius;

namespace {

GeoPoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), lng(-180.0, 180.0);
  return geodesy::canonicalize(std::asin(u(rng)) * 180.0 / M_PI, lng(rng));
}

}  // namespace

TEST(Canonicalize, LeavesCanonicalPointsAlone) {
  const auto p = geodesy::canonicalize(35.6897, 139.6922);
  EXPECT_EQ(p.lat, 35.6897);
  EXPECT_EQ(p.lng, 139.6922);
}

TEST(Canonicalize, WrapsLongitudeOntoPositiveBoundary) {
  const auto p = geodesy::canonicalize(0.0, 540.0);
  EXPECT_EQ(p.lat, 0.0);
  EXPECT_EQ(p.lng, 180.0);
  EXPECT_EQ(geodesy::canonicalize(0.0, -180.0).lng, 180.0);
  EXPECT_DOUBLE_EQ(geodesy::canonicalize(0.0, -190.0).lng, 170.0);
  EXPECT_DOUBLE_EQ(geodesy::canonicalize(0.0, 370.0).lng, 10.0);
}

TEST(Canonicalize, ClampsLatitude) {
  const auto p = geodesy::canonicalize(95.0, 0.0);
  EXPECT_EQ(p.lat, 90.0);
  EXPECT_EQ(p.lng, 0.0);
  EXPECT_EQ(geodesy::canonicalize(-100.0, 0.0).lat, -90.0);
}

TEST(Canonicalize, RejectsNonFinite) {
  EXPECT_THROW(geodesy::canonicalize(std::nan(""), 0.0), InvalidCoordinate);
  EXPECT_THROW(geodesy::canonicalize(0.0, std::numeric_limits<double>::infinity()), InvalidCoordinate);
}

TEST(Haversine, IdenticalPointsAreZero) {
  const GeoPoint shanghai{31.1667, 121.4667};
  EXPECT_EQ(geodesy::haversine_km(shanghai, shanghai), 0.0);
}

TEST(Haversine, AntipodalIsHalfCircumference) {
  const double d = geodesy::haversine_km({0, 0}, {0, 180});
  EXPECT_NEAR(d, 20015.114442035923, 1e-9);
  EXPECT_NEAR(d, M_PI * kRadius, 1e-9);
}

TEST(Haversine, TokyoNewYorkMatchesGreatCircleOracle) {
  const GeoPoint tokyo{35.6897, 139.6922}, new_york{40.6943, -73.9249};
  const double d = geodesy::haversine_km(tokyo, new_york);
  const double oracle = great_circle_km(tokyo.lat, tokyo.lng, new_york.lat, new_york.lng);
  EXPECT_LT(testsupport::rel_err(d, oracle), 1e-6);
  EXPECT_NEAR(d, 10853.720978390436, 1e-6);
}

TEST(Haversine, CustomRadiusScales) {
  EXPECT_NEAR(geodesy::haversine_km({0, 0}, {0, 90}, {1.0}), M_PI / 2, 1e-12);
}

TEST(Haversine, PropertiesOnRandomPoints) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_point(rng), b = random_point(rng), c = random_point(rng);
    const double ab = geodesy::haversine_km(a, b);
    EXPECT_EQ(ab, geodesy::haversine_km(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, M_PI * kRadius);
    EXPECT_LE(ab, geodesy::haversine_km(a, c) + geodesy::haversine_km(c, b) + 1e-9);
    EXPECT_LT(testsupport::rel_err(ab, great_circle_km(a.lat, a.lng, b.lat, b.lng)), 1e-6);
    const auto shifted = geodesy::canonicalize(a.lat, a.lng + 360.0);
    EXPECT_NEAR(geodesy::haversine_km(shifted, b), ab, 1e-9);
  }
}

TEST(GeodistLoss, ZeroWhenPredictionsMatch) {
  const std::vector<GeoPoint> pts{{1, 2}, {-30, 150}, {89, -179}};
  EXPECT_EQ(geodesy::geodist_loss(pts, pts), 0.0);
}

TEST(GeodistLoss, SingleAntipodalPair) {
  const std::vector<GeoPoint> pred{{0, 0}}, target{{0, 180}};
  EXPECT_NEAR(geodesy::geodist_loss(pred, target), M_PI * kRadius, 1e-9);
}

TEST(GeodistLoss, SumsPerPairOracle) {
  std::mt19937_64 rng(3);
  std::vector<GeoPoint> pred, target;
  double oracle = 0.0;
  for (int i = 0; i < 3; ++i) {
    pred.push_back(random_point(rng));
    target.push_back(random_point(rng));
    oracle += great_circle_km(pred.back().lat, pred.back().lng, target.back().lat, target.back().lng);
  }
  EXPECT_LT(testsupport::rel_err(geodesy::geodist_loss(pred, target), oracle), 1e-6);
}

TEST(GeodistLoss, RejectsBadLengths) {
  const std::vector<GeoPoint> one{{0, 0}}, two{{0, 0}, {1, 1}}, none;
  EXPECT_THROW(geodesy::geodist_loss(one, two), ShapeError);
  EXPECT_THROW(geodesy::geodist_loss(none, none), ShapeError);
}

namespace {

// Central differences of the oracle distance with respect to raw predicted degrees.
std::pair<double, double> fd_gradient(double lat, double lng, const GeoPoint& t, double step) {
  auto f = [&](double a, double b) {
    const auto p = geodesy::canonicalize(a, b);
    return great_circle_km(p.lat, p.lng, t.lat, t.lng);
  };
  return {(f(lat + step, lng) - f(lat - step, lng)) / (2 * step), (f(lat, lng + step) - f(lat, lng - step)) / (2 * step)};
}

}  // namespace

TEST(GeodistGradient, CoincidentPointsGiveZero) {
  const auto g = geodesy::geodist_gradient(12.0, 34.0, {12.0, 34.0});
  EXPECT_EQ(g.d_lat, 0.0);
  EXPECT_EQ(g.d_lng, 0.0);
}

TEST(GeodistGradient, MatchesFiniteDifferences) {
  const GeoPoint target{30, 40};
  const auto g = geodesy::geodist_gradient(10, 20, target);
  const auto [fd_lat, fd_lng] = fd_gradient(10, 20, target, 1e-4);
  EXPECT_LT(testsupport::rel_err(g.d_lat, fd_lat), 1e-4);
  EXPECT_LT(testsupport::rel_err(g.d_lng, fd_lng), 1e-4);
}

TEST(GeodistGradient, FollowsShorterArcAcrossAntimeridian) {
  const GeoPoint target{0, -179.9};
  const auto g = geodesy::geodist_gradient(0, 179.9, target);
  const auto [fd_lat, fd_lng] = fd_gradient(0, 179.9, target, 1e-4);
  EXPECT_LT(g.d_lng, 0.0);
  EXPECT_LT(fd_lng, 0.0);
  EXPECT_LT(testsupport::rel_err(g.d_lng, fd_lng), 1e-4);
  EXPECT_NEAR(g.d_lat, fd_lat, 1e-6);
}

TEST(GeodistGradient, ClampedLatitudeHasZeroGradient) {
  EXPECT_EQ(geodesy::geodist_gradient(95.0, 10.0, {0, 0}).d_lat, 0.0);
}

TEST(GeodistGradient, HundredSeededPairsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> lat(-85.0, 85.0), lng(-180.0, 180.0);
  int checked = 0;
  while (checked < 100) {
    const double plat = lat(rng), plng = lng(rng);
    const GeoPoint target = geodesy::canonicalize(lat(rng), lng(rng));
    const double d = great_circle_km(plat, plng, target.lat, target.lng);
    if (d < 1.0 || d > 20000.0) continue;
    const auto g = geodesy::geodist_gradient(plat, plng, target);
    const auto [fd_lat, fd_lng] = fd_gradient(plat, plng, target, 1e-5);
    const double norm = std::hypot(fd_lat, fd_lng);
    EXPECT_LT(std::hypot(g.d_lat - fd_lat, g.d_lng - fd_lng) / norm, 1e-4) << plat << "," << plng;
    ++checked;
  }
}
