#pragma once

// Spherical-earth distance math in degrees.

#include <span>

namespace geoprobe::geodesy {

/// A canonical point: lat in [-90, 90], lng in (-180, 180].
struct GeoPoint {
  double lat = 0.0;
  double lng = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct EarthModel {
  double radius_km = 6371.0088;
};

/// Partial derivatives of a distance in km per degree.
struct GeoGradient {
  double d_lat = 0.0;
  double d_lng = 0.0;
};

/// Clamps latitude and wraps longitude into (-180, 180].
/// Throws InvalidCoordinate on NaN or infinite input.
GeoPoint canonicalize(double lat_raw, double lng_raw);

/// Great-circle distance 2r*asin(sqrt(H)) with H = hav(dlat) + cos(lat1)cos(lat2)hav(dlng).
double haversine_km(const GeoPoint& a, const GeoPoint& b, const EarthModel& earth = {});

/// Sum of pairwise haversine distances. Throws ShapeError on length mismatch or empty input.
double geodist_loss(std::span<const GeoPoint> pred, std::span<const GeoPoint> target,
                    const EarthModel& earth = {});

/// Gradient of haversine_km(canonicalize(pred), target) with respect to the raw
/// predicted coordinates. Longitude wrap has unit derivative; a latitude outside
/// [-90, 90] is clamped and receives zero gradient. Coincident and antipodal
/// points return (0, 0).
GeoGradient geodist_gradient(double pred_lat, double pred_lng, const GeoPoint& target,
                             const EarthModel& earth = {});

}  // namespace geoprobe::geodesy
