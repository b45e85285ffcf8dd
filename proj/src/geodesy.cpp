#include "geoprobe/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geoprobe/error.hpp"

namespace geoprobe::geodesy {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double hav(double theta) {
  const double s = std::sin(theta / 2.0);
  return s * s;
}

double wrap_longitude(double lng) {
  double wrapped = std::fmod(lng, 360.0);
  if (wrapped <= -180.0) wrapped += 360.0;
  if (wrapped > 180.0) wrapped -= 360.0;
  return wrapped;
}

}  // namespace

GeoPoint canonicalize(double lat_raw, double lng_raw) {
  if (!std::isfinite(lat_raw) || !std::isfinite(lng_raw)) {
    throw InvalidCoordinate("non-finite coordinate (" + std::to_string(lat_raw) + ", " +
                            std::to_string(lng_raw) + ")");
  }
  return GeoPoint{std::clamp(lat_raw, -90.0, 90.0), wrap_longitude(lng_raw)};
}

double haversine_km(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double h = hav(lat2 - lat1) + std::cos(lat1) * std::cos(lat2) * hav((b.lng - a.lng) * kDegToRad);
  return 2.0 * earth.radius_km * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

double geodist_loss(std::span<const GeoPoint> pred, std::span<const GeoPoint> target,
                    const EarthModel& earth) {
  if (pred.size() != target.size()) {
    throw ShapeError("geodist_loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) throw ShapeError("geodist_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += haversine_km(pred[i], target[i], earth);
  return total;
}

GeoGradient geodist_gradient(double pred_lat, double pred_lng, const GeoPoint& target,
                             const EarthModel& earth) {
  const GeoPoint p = canonicalize(pred_lat, pred_lng);
  const bool lat_clamped = pred_lat > 90.0 || pred_lat < -90.0;

  const double lat1 = p.lat * kDegToRad;
  const double lat2 = target.lat * kDegToRad;
  const double dlat = lat1 - lat2;
  const double dlng = (p.lng - target.lng) * kDegToRad;
  const double cos1 = std::cos(lat1);
  const double cos2 = std::cos(lat2);
  const double hav_dlng = hav(dlng);

  const double h = hav(dlat) + cos1 * cos2 * hav_dlng;
  if (!(h > 0.0) || !(h < 1.0)) return {};

  // d(2r asin(sqrt h))/dh
  const double dd_dh = earth.radius_km / std::sqrt(h * (1.0 - h));
  const double dh_dlat = 0.5 * std::sin(dlat) - std::sin(lat1) * cos2 * hav_dlng;
  const double dh_dlng = 0.5 * cos1 * cos2 * std::sin(dlng);

  GeoGradient g;
  g.d_lat = lat_clamped ? 0.0 : dd_dh * dh_dlat * kDegToRad;
  g.d_lng = dd_dh * dh_dlng * kDegToRad;
  return g;
}

}  // namespace geoprobe::geodesy
