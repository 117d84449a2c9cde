#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poimatch/geo.hpp"
#include "poimatch/text.hpp"

namespace poimatch {

enum class PlaceKind { kPoi, kRestaurant };

// Dataset tag. Declaration order is the canonical concatenation order used
// by the merged-country experiment.
enum class Country { kID, kMY, kSG, kPH, kMERGED };

std::string_view to_string(PlaceKind kind);
std::string_view to_string(Country country);
// Accepts "ID", "MY", "SG", "PH", "MERGED" (case-insensitive).
std::optional<Country> parse_country(std::string_view s);

struct PlaceRecord {
  std::string id;
  PlaceKind kind = PlaceKind::kPoi;
  std::string name_raw;
  std::optional<std::string> street_raw;
  text::NormalizedText name_norm;
  std::optional<text::NormalizedText> street_norm;
  geo::GeoPoint location;
  Country country = Country::kID;

  // Builds a record with normalized fields. A street that is empty, or
  // normalizes to nothing, is stored as absent. Throws ArgumentError when
  // the coordinates are out of range or the normalized name is empty.
  static PlaceRecord make(std::string id, PlaceKind kind, std::string name, std::optional<std::string> street,
                          geo::GeoPoint location, Country country);
};

// geohash -> positions of records in that cell, ascending.
using GeohashIndex = std::map<std::string, std::vector<std::size_t>, std::less<>>;

GeohashIndex build_geohash_index(std::span<const PlaceRecord> records, int precision);

// Immutable, indexed table of places of one kind.
class PlaceTable {
 public:
  static constexpr int kDefaultPrecision = 6;

  PlaceTable() = default;
  // Throws ArgumentError on duplicate ids or a record of the wrong kind.
  PlaceTable(PlaceKind kind, Country country, std::vector<PlaceRecord> records,
             int precision = kDefaultPrecision);

  PlaceKind kind() const { return kind_; }
  Country country() const { return country_; }
  int precision() const { return precision_; }
  std::span<const PlaceRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const PlaceRecord& operator[](std::size_t i) const { return records_[i]; }

  const GeohashIndex& index() const { return index_; }
  // Cell of record i at the table's precision.
  const std::string& geohash(std::size_t i) const { return cells_[i]; }

  std::optional<std::size_t> find(std::string_view id) const;

 private:
  PlaceKind kind_ = PlaceKind::kPoi;
  Country country_ = Country::kID;
  int precision_ = kDefaultPrecision;
  std::vector<PlaceRecord> records_;
  std::vector<std::string> cells_;
  GeohashIndex index_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

// Loads a place file. Files ending in ".jsonl" are read as one JSON object
// per line with keys id, name, street, lat, lon; anything else is CSV with
// the header id,name,street,lat,lon (case-insensitive). Throws LoadError
// naming the offending line.
PlaceTable load_places(const std::filesystem::path& path, PlaceKind kind, Country country,
                       int precision = PlaceTable::kDefaultPrecision);

// Writes the CSV form read by load_places. Coordinates use round-trip
// formatting so a reload reproduces the table exactly.
void write_places(const std::filesystem::path& path, const PlaceTable& table);

}  // namespace poimatch
