#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "poimatch/records.hpp"

namespace poimatch {

enum class Feature : std::size_t { kGeoDistance = 0, kNameLev = 1, kNameJaro = 2, kStreetLev = 3 };
inline constexpr std::size_t kNumFeatures = 4;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames{"geo_distance_m", "name_lev", "name_jaro",
                                                                     "street_lev"};

using FeatureArray = std::array<double, kNumFeatures>;

struct FeatureVector {
  double geo_distance_m = 0.0;
  double name_lev = 0.0;
  double name_jaro = 0.0;
  double street_lev = 0.0;
  // Metadata only; never a model input.
  bool street_missing = false;

  FeatureArray as_array() const { return {geo_distance_m, name_lev, name_jaro, street_lev}; }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct BlockingConfig {
  int geohash_precision = 6;
  std::size_t top_k = 10;
  double name_lev_threshold = 0.4;
  bool neighbor_expansion = false;
  double street_impute = 1.0;
  // Rewrite "jl"/"jln" to "jalan" before comparing streets.
  bool expand_street_abbreviations = false;
  // Worker threads for blocking/featurization; output order never depends on it.
  unsigned workers = 1;

  // Throws ConfigError.
  void validate() const;
};

struct CandidatePair {
  std::string restaurant_id;
  std::string poi_id;
  // The restaurant's cell.
  std::string geohash;
  FeatureVector features;

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

// Same-cell cross product (plus the 8 neighbor cells when enabled), sorted by
// (restaurant_id, poi_id). Features are left zeroed.
std::vector<CandidatePair> block_pairs(const PlaceTable& restaurants, const PlaceTable& pois,
                                       const BlockingConfig& cfg);

FeatureVector featurize(const PlaceRecord& restaurant, const PlaceRecord& poi, const BlockingConfig& cfg);

// Fills in features for every pair. Throws ArgumentError when an id is not
// present in its table.
void featurize_all(std::vector<CandidatePair>& pairs, const PlaceTable& restaurants, const PlaceTable& pois,
                   const BlockingConfig& cfg);

// Keeps a pair iff its POI is among the restaurant's top_k nearest blocked
// POIs (ties by poi_id) and then name_lev <= name_lev_threshold. Output is
// sorted by (restaurant_id, poi_id).
std::vector<CandidatePair> downsample(std::vector<CandidatePair> pairs, const BlockingConfig& cfg);

// Pair file. With `features == false` only the id/geohash columns are written
// (the output of the blocking stage before featurization).
void write_pairs(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs, bool features = true);
std::vector<CandidatePair> read_pairs(const std::filesystem::path& path);

}  // namespace poimatch
