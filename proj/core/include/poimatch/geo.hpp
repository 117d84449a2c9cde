#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace poimatch::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr int kMinPrecision = 1;
inline constexpr int kMaxPrecision = 12;
inline constexpr std::string_view kGeohashAlphabet = "0123456789bcdefghjkmnpqrstuvwxyz";

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// True when lat is in [-90, 90] and lon in [-180, 180].
bool is_valid(GeoPoint p);

// Great-circle distance in meters on a sphere of radius kEarthRadiusM,
// computed with the haversine formulation.
double haversine_m(GeoPoint a, GeoPoint b);

struct GeohashCell {
  std::string code;
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  GeoPoint center() const { return {(lat_min + lat_max) / 2, (lon_min + lon_max) / 2}; }
  // Closed-box containment.
  bool contains(GeoPoint p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
};

// Standard base-32 geohash. Throws ArgumentError when precision is outside
// [1, 12] or the point is invalid.
std::string geohash_encode(GeoPoint p, int precision);

// Throws ArgumentError on an empty code, a code longer than 12, or a
// character outside the geohash alphabet.
GeohashCell geohash_decode_bounds(std::string_view code);

// Same-precision cells around `code` in N, NE, E, SE, S, SW, W, NW order.
// Longitude wraps at the antimeridian; rows beyond a pole are omitted, so
// polar cells return fewer than 8 codes.
std::vector<std::string> geohash_neighbors(std::string_view code);

}  // namespace poimatch::geo
