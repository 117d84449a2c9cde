#include "poimatch/geo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "poimatch/errors.hpp"

namespace poimatch {
namespace geo {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

int alphabet_index(char c) {
  const auto pos = kGeohashAlphabet.find(c);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

}  // namespace

bool is_valid(GeoPoint p) {
  return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine_m(GeoPoint a, GeoPoint b) {
  if (a == b) return 0.0;
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double sin_dphi = std::sin((b.lat - a.lat) * kDegToRad / 2);
  const double sin_dlambda = std::sin((b.lon - a.lon) * kDegToRad / 2);
  const double h = sin_dphi * sin_dphi + std::cos(phi1) * std::cos(phi2) * sin_dlambda * sin_dlambda;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

std::string geohash_encode(GeoPoint p, int precision) {
  if (precision < kMinPrecision || precision > kMaxPrecision) {
    throw ArgumentError("geohash precision must be in [1, 12], got " + std::to_string(precision));
  }
  if (!is_valid(p)) throw ArgumentError("geohash_encode: coordinate out of range");

  double lat_lo = -90.0, lat_hi = 90.0;
  double lon_lo = -180.0, lon_hi = 180.0;
  std::string code;
  code.reserve(precision);
  bool lon_bit = true;
  for (int c = 0; c < precision; ++c) {
    int value = 0;
    for (int b = 0; b < 5; ++b) {
      value <<= 1;
      if (lon_bit) {
        const double mid = (lon_lo + lon_hi) / 2;
        if (p.lon >= mid) {
          value |= 1;
          lon_lo = mid;
        } else {
          lon_hi = mid;
        }
      } else {
        const double mid = (lat_lo + lat_hi) / 2;
        if (p.lat >= mid) {
          value |= 1;
          lat_lo = mid;
        } else {
          lat_hi = mid;
        }
      }
      lon_bit = !lon_bit;
    }
    code.push_back(kGeohashAlphabet[value]);
  }
  return code;
}

GeohashCell geohash_decode_bounds(std::string_view code) {
  if (code.empty() || code.size() > static_cast<std::size_t>(kMaxPrecision)) {
    throw ArgumentError("geohash code length must be in [1, 12]");
  }
  GeohashCell cell{std::string(code), -90.0, 90.0, -180.0, 180.0};
  bool lon_bit = true;
  for (char ch : code) {
    const int value = alphabet_index(ch);
    if (value < 0) throw ArgumentError(std::string("invalid geohash character '") + ch + "'");
    for (int b = 4; b >= 0; --b) {
      const bool bit = (value >> b) & 1;
      if (lon_bit) {
        const double mid = (cell.lon_min + cell.lon_max) / 2;
        (bit ? cell.lon_min : cell.lon_max) = mid;
      } else {
        const double mid = (cell.lat_min + cell.lat_max) / 2;
        (bit ? cell.lat_min : cell.lat_max) = mid;
      }
      lon_bit = !lon_bit;
    }
  }
  return cell;
}

std::vector<std::string> geohash_neighbors(std::string_view code) {
  const GeohashCell cell = geohash_decode_bounds(code);
  const int precision = static_cast<int>(code.size());
  const double height = cell.lat_max - cell.lat_min;
  const double width = cell.lon_max - cell.lon_min;
  const GeoPoint c = cell.center();

  // N, NE, E, SE, S, SW, W, NW
  static constexpr std::array<std::array<int, 2>, 8> kOffsets{{
      {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

  std::vector<std::string> out;
  out.reserve(8);
  for (const auto& [dlat, dlon] : kOffsets) {
    const double lat = c.lat + dlat * height;
    if (lat > 90.0 || lat < -90.0) continue;
    double lon = c.lon + dlon * width;
    if (lon > 180.0) lon -= 360.0;
    if (lon < -180.0) lon += 360.0;
    std::string n = geohash_encode({lat, lon}, precision);
    if (n != cell.code && std::find(out.begin(), out.end(), n) == out.end()) {
      out.push_back(std::move(n));
    }
  }
  return out;
}

}  // namespace geo
}  // namespace poimatch
