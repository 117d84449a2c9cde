#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "poimatch/records.hpp"

namespace poimatch::synth {

struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
};

// How a true match is positioned relative to its restaurant.
enum class MatchPlacement {
  kJitter,      // Gaussian offset with gps_jitter_sigma_m
  kCellUniform  // uniform inside the restaurant's geohash-6 cell (no distance signal)
};

struct GenConfig {
  Country country = Country::kID;
  BoundingBox bbox{-8.75, -8.60, 115.10, 115.30};
  std::size_t n_restaurants = 440;
  // Unrelated POIs per geohash-6 cell of the bounding box.
  double pois_per_cell = 10.0;
  // Fraction of restaurants that have a POI counterpart.
  double match_fraction = 0.75;

  // Name noise applied to the POI side of a true match.
  double p_space_variant = 0.3;
  double p_abbreviation = 0.5;
  double p_suffix_append = 0.4;
  double p_typo = 0.15;
  double p_case_variant = 0.5;

  // Street noise (either side independently).
  double p_missing_street = 0.2;

  double gps_jitter_sigma_m = 25.0;
  MatchPlacement match_placement = MatchPlacement::kJitter;

  // Near-miss distractors: per restaurant, a POI sharing its leading name
  // word and street, placed within near_miss_radius_m.
  double p_near_miss = 0.9;
  double near_miss_radius_m = 400.0;
  // Restaurants reuse an existing brand (chain branches) with this chance.
  double p_chain = 0.1;

  std::uint64_t seed = 0;

  // Throws ArgumentError.
  void validate() const;
};

// Defaults per country. Knobs differ between countries so that pooled
// training sees a shifted feature distribution.
GenConfig country_preset(Country country, std::uint64_t seed = 0);

// All noise, jitter and distractors switched off.
GenConfig noiseless(GenConfig cfg);

using TruthSet = std::set<std::pair<std::string, std::string>>;  // (restaurant_id, poi_id)

struct Dataset {
  PlaceTable restaurants;
  PlaceTable pois;
  TruthSet truth;
};

Dataset generate(const GenConfig& cfg);

// Header: restaurant_id,poi_id.
void write_truth(const std::filesystem::path& path, const TruthSet& truth);
TruthSet read_truth(const std::filesystem::path& path);

// Writes restaurants.csv, pois.csv and truth.csv into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace poimatch::synth
