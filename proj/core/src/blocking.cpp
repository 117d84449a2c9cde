#include "poimatch/blocking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"

namespace poimatch {
namespace {

const std::vector<std::string> kPairHeader{"restaurant_id", "poi_id",     "geohash6",   "geo_distance_m",
                                           "name_lev",      "name_jaro",  "street_lev", "street_missing"};

bool pair_less(const CandidatePair& a, const CandidatePair& b) {
  if (a.restaurant_id != b.restaurant_id) return a.restaurant_id < b.restaurant_id;
  return a.poi_id < b.poi_id;
}

// Runs fn(worker, begin, end) over [0, n) split into at most `workers`
// contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, workers);
  if (workers == 1 || n < 2) {
    fn(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> threads;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
  }
}

}  // namespace

void BlockingConfig::validate() const {
  if (geohash_precision < geo::kMinPrecision || geohash_precision > geo::kMaxPrecision) {
    throw ConfigError("blocking.geohash_precision must be in [1, 12], got " + std::to_string(geohash_precision));
  }
  if (top_k < 1) throw ConfigError("blocking.top_k must be >= 1");
  if (!(name_lev_threshold > 0.0 && name_lev_threshold <= 1.0)) {
    throw ConfigError("blocking.name_lev_threshold must be in (0, 1]");
  }
  if (!std::isfinite(street_impute)) throw ConfigError("blocking.street_impute must be finite");
  if (workers < 1) throw ConfigError("blocking.workers must be >= 1");
}

std::vector<CandidatePair> block_pairs(const PlaceTable& restaurants, const PlaceTable& pois,
                                       const BlockingConfig& cfg) {
  cfg.validate();
  const int precision = cfg.geohash_precision;
  GeohashIndex local_r, local_p;
  const GeohashIndex& r_index =
      restaurants.precision() == precision ? restaurants.index()
                                           : (local_r = build_geohash_index(restaurants.records(), precision));
  const GeohashIndex& p_index =
      pois.precision() == precision ? pois.index() : (local_p = build_geohash_index(pois.records(), precision));

  std::vector<const GeohashIndex::value_type*> cells;
  cells.reserve(r_index.size());
  for (const auto& entry : r_index) cells.push_back(&entry);

  std::vector<std::vector<CandidatePair>> partial(std::max(1u, cfg.workers));
  parallel_chunks(cells.size(), cfg.workers, [&](unsigned worker, std::size_t begin, std::size_t end) {
    std::vector<CandidatePair> out;
    for (std::size_t c = begin; c < end; ++c) {
      const auto& [code, r_positions] = *cells[c];
      std::vector<std::string_view> poi_cells{code};
      std::vector<std::string> neighbors;
      if (cfg.neighbor_expansion) {
        neighbors = geo::geohash_neighbors(code);
        poi_cells.insert(poi_cells.end(), neighbors.begin(), neighbors.end());
      }
      for (std::string_view pc : poi_cells) {
        const auto it = p_index.find(pc);
        if (it == p_index.end()) continue;
        for (std::size_t ri : r_positions) {
          for (std::size_t pi : it->second) {
            out.push_back({restaurants[ri].id, pois[pi].id, code, {}});
          }
        }
      }
    }
    partial[worker] = std::move(out);
  });

  std::vector<CandidatePair> pairs;
  for (auto& p : partial) std::move(p.begin(), p.end(), std::back_inserter(pairs));
  std::sort(pairs.begin(), pairs.end(), pair_less);
  return pairs;
}

FeatureVector featurize(const PlaceRecord& restaurant, const PlaceRecord& poi, const BlockingConfig& cfg) {
  FeatureVector f;
  f.geo_distance_m = geo::haversine_m(restaurant.location, poi.location);
  f.name_lev = text::levenshtein_norm(restaurant.name_norm, poi.name_norm);
  f.name_jaro = text::jaro_distance(restaurant.name_norm, poi.name_norm);
  if (restaurant.street_norm && poi.street_norm) {
    if (cfg.expand_street_abbreviations) {
      const auto a = text::normalize_text(text::expand_street_abbreviations(*restaurant.street_raw));
      const auto b = text::normalize_text(text::expand_street_abbreviations(*poi.street_raw));
      f.street_lev = text::levenshtein_norm(a, b);
    } else {
      f.street_lev = text::levenshtein_norm(*restaurant.street_norm, *poi.street_norm);
    }
  } else {
    f.street_lev = cfg.street_impute;
    f.street_missing = true;
  }
  return f;
}

void featurize_all(std::vector<CandidatePair>& pairs, const PlaceTable& restaurants, const PlaceTable& pois,
                   const BlockingConfig& cfg) {
  std::vector<std::pair<std::size_t, std::size_t>> positions(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto r = restaurants.find(pairs[i].restaurant_id);
    const auto p = pois.find(pairs[i].poi_id);
    if (!r) throw ArgumentError("unknown restaurant id '" + pairs[i].restaurant_id + "'");
    if (!p) throw ArgumentError("unknown poi id '" + pairs[i].poi_id + "'");
    positions[i] = {*r, *p};
  }
  parallel_chunks(pairs.size(), cfg.workers, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      pairs[i].features = featurize(restaurants[positions[i].first], pois[positions[i].second], cfg);
    }
  });
}

std::vector<CandidatePair> downsample(std::vector<CandidatePair> pairs, const BlockingConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<CandidatePair>, std::less<>> by_restaurant;
  for (auto& p : pairs) by_restaurant[p.restaurant_id].push_back(std::move(p));

  std::vector<CandidatePair> out;
  for (auto& [rid, group] : by_restaurant) {
    std::sort(group.begin(), group.end(), [](const CandidatePair& a, const CandidatePair& b) {
      if (a.features.geo_distance_m != b.features.geo_distance_m) {
        return a.features.geo_distance_m < b.features.geo_distance_m;
      }
      return a.poi_id < b.poi_id;
    });
    if (group.size() > cfg.top_k) group.resize(cfg.top_k);
    for (auto& p : group) {
      if (p.features.name_lev <= cfg.name_lev_threshold) out.push_back(std::move(p));
    }
  }
  std::sort(out.begin(), out.end(), pair_less);
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<CandidatePair>& pairs, bool features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  if (features) {
    csv::write_row(out, kPairHeader);
  } else {
    csv::write_row(out, {kPairHeader.begin(), kPairHeader.begin() + 3});
  }
  for (const CandidatePair& p : pairs) {
    if (!features) {
      csv::write_row(out, {p.restaurant_id, p.poi_id, p.geohash});
      continue;
    }
    const FeatureVector& f = p.features;
    csv::write_row(out, {p.restaurant_id, p.poi_id, p.geohash, csv::format_sig9(f.geo_distance_m),
                         csv::format_sig9(f.name_lev), csv::format_sig9(f.name_jaro),
                         csv::format_sig9(f.street_lev), f.street_missing ? "1" : "0"});
  }
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<CandidatePair> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  std::vector<CandidatePair> pairs;
  try {
    if (!reader.next(fields)) throw LoadError(path.string(), 0, "missing header row");
    const bool full = fields == kPairHeader;
    const bool ids_only = fields == std::vector<std::string>(kPairHeader.begin(), kPairHeader.begin() + 3);
    if (!full && !ids_only) throw LoadError(path.string(), 1, "unrecognized pair file header");
    const std::size_t expected = full ? kPairHeader.size() : 3;
    while (reader.next(fields)) {
      if (fields.size() == 1 && fields[0].empty()) continue;
      const std::size_t line = reader.line();
      if (fields.size() != expected) throw LoadError(path.string(), line, "wrong number of fields");
      CandidatePair p{fields[0], fields[1], fields[2], {}};
      if (full) {
        std::array<double, 4> v{};
        for (std::size_t k = 0; k < 4; ++k) {
          const auto d = csv::parse_double(fields[3 + k]);
          if (!d) throw LoadError(path.string(), line, "bad value in column " + kPairHeader[3 + k]);
          v[k] = *d;
        }
        if (fields[7] != "0" && fields[7] != "1") throw LoadError(path.string(), line, "street_missing must be 0 or 1");
        p.features = {v[0], v[1], v[2], v[3], fields[7] == "1"};
      }
      pairs.push_back(std::move(p));
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw LoadError(path.string(), reader.line(), e.what());
  }
  return pairs;
}

}  // namespace poimatch
