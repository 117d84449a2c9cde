#include "poimatch/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/geo.hpp"
#include "poimatch/random.hpp"

namespace poimatch::synth {
namespace {

struct Vocabulary {
  std::vector<std::string_view> prefixes;
  std::vector<std::string_view> cores;
  std::vector<std::string_view> streets;
  std::vector<std::string_view> localities;
};

const Vocabulary& vocabulary(Country c) {
  static const Vocabulary id{
      {"warung", "rumah makan", "kedai", "bakso", "mie", "ayam goreng", "sate", "nasi goreng", "kopi", "depot",
       "soto", "martabak"},
      {"hana",     "sari",      "bu tini", "pak kumis", "setan",    "gacoan",  "bahagia",   "sederhana",
       "padang",   "jaya",      "makmur",  "sejahtera", "barokah",  "mulya",   "indah",     "lestari",
       "sentosa",  "kenanga",   "melati",  "mawar",     "cahaya",   "pelangi", "citra",     "ria",
       "dewi",     "bu ani",    "pak slamet", "mbok sri", "bu rudy", "pak gendut", "wong solo", "bang jali",
       "mas agus", "cak har",   "enak",    "nikmat",    "selera",   "rasa",    "murah",     "kita"},
      {"jalan raya ubud", "jalan sunset road", "jalan gatot subroto", "jalan teuku umar", "jalan diponegoro",
       "jalan hayam wuruk", "jalan imam bonjol", "jalan sudirman", "jalan by pass ngurah rai", "jalan raya kuta",
       "jalan danau tamblingan", "jalan pantai berawa", "jalan raya sukawati", "jalan kartini"},
      {"sukawati", "ubud", "kuta", "denpasar", "sanur", "seminyak", "canggu", "legian", "jimbaran", "nusa dua",
       "gianyar", "tabanan"}};
  static const Vocabulary my{
      {"restoran", "kedai kopi", "nasi kandar", "mamak", "warung", "kafe", "gerai", "dapur", "mee", "roti"},
      {"ali",    "selera",  "mewah",     "bistari", "pelita",  "kayu",   "line clear", "hameed",
       "maju",   "baru",    "lim",       "ah fatt", "nyonya",  "seri",   "bunga raya", "zaman",
       "kampung", "sri melaka", "murni", "sentral", "raju",   "yusoof", "kak su",     "pak li",
       "hakka",  "ipoh",    "tanjung",   "pantai",  "bukit",   "desa"},
      {"jalan bangsar", "jalan telawi", "jalan ampang", "jalan pudu", "jalan tun razak", "jalan ipoh",
       "jalan klang lama", "jalan genting klang", "jalan sultan ismail", "jalan cheras", "jalan kuchai lama"},
      {"bangsar", "cheras", "ampang", "kepong", "setapak", "petaling jaya", "mont kiara", "sentul", "titiwangsa",
       "pudu"}};
  static const Vocabulary sg{
      {"cafe", "kitchen", "noodle house", "chicken rice", "bak kut teh", "prawn mee", "kopi", "bakery", "laksa",
       "dim sum"},
      {"tian tian", "song fa",   "lau pa sat", "ah hock",  "ya kun",   "toast box", "boon tong kee",
       "wee nam kee", "hill street", "jumbo", "no signboard", "joo chiat", "katong", "golden mile",
       "sin ming",  "loy kee",   "heng heng",  "hong kong", "lucky",   "fortune",  "tai hwa",
       "outram park", "zhen zhen", "lian he",  "ji ji",     "xin yuan", "kim choo"},
      {"orchard road", "north bridge road", "beach road", "east coast road", "upper thomson road", "jalan besar",
       "jalan bukit merah", "tanjong pagar road", "serangoon road", "geylang road"},
      {"bugis", "tiong bahru", "katong", "novena", "bishan", "clementi", "tampines", "jurong", "toa payoh",
       "bedok"}};
  static const Vocabulary ph{
      {"carinderia", "lutong bahay", "lechon", "kainan", "tapsilugan", "bakery", "ihaw ihaw", "lugawan", "cafe",
       "pares"},
      {"aling nena", "mang inasal", "tita rosa", "kuya jun", "lola",    "masarap", "bahay kubo", "sinigang",
       "manang",     "dalisay",     "tatay",    "ate joy",  "kusina",  "pinoy",   "masagana",   "bulalo",
       "sisig",      "kapitbahay",  "tito boy", "inday",    "mang tomas", "bida"},
      {"ayala avenue", "taft avenue", "shaw boulevard", "edsa", "roxas boulevard", "quezon avenue",
       "aurora boulevard", "katipunan avenue", "ortigas avenue", "makati avenue"},
      {"makati", "pasig", "quezon city", "taguig", "mandaluyong", "san juan", "malate", "ermita", "cubao",
       "ortigas"}};
  switch (c) {
    case Country::kMY: return my;
    case Country::kSG: return sg;
    case Country::kPH: return ph;
    default: return id;
  }
}

constexpr double kMetersPerDegree = geo::kEarthRadiusM * std::numbers::pi / 180.0;

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.uniform_index(v.size())];
}

geo::GeoPoint offset(const geo::GeoPoint& p, double north_m, double east_m) {
  const double lat = std::clamp(p.lat + north_m / kMetersPerDegree, -90.0, 90.0);
  double lon = p.lon + east_m / (kMetersPerDegree * std::max(1e-6, std::cos(p.lat * std::numbers::pi / 180.0)));
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return {lat, lon};
}

std::string title_case(std::string s) {
  bool start = true;
  for (char& ch : s) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalpha(u)) {
      if (start) ch = static_cast<char>(std::toupper(u));
      start = false;
    } else {
      start = true;
    }
  }
  return s;
}

// Drops one space, or splits a word with a new space.
std::string space_variant(Rng& rng, const std::string& s) {
  std::vector<std::size_t> spaces;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ' ') spaces.push_back(i);
  }
  if (!spaces.empty() && rng.bernoulli(0.6)) {
    std::string out = s;
    out.erase(pick(rng, spaces), 1);
    return out;
  }
  std::vector<std::size_t> cuts;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (std::isalpha(static_cast<unsigned char>(s[i - 1])) && std::isalpha(static_cast<unsigned char>(s[i]))) {
      cuts.push_back(i);
    }
  }
  if (cuts.empty()) return s;
  std::string out = s;
  out.insert(pick(rng, cuts), 1, ' ');
  return out;
}

std::string typo(Rng& rng, const std::string& s) {
  std::vector<std::size_t> letters;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isalpha(static_cast<unsigned char>(s[i]))) letters.push_back(i);
  }
  if (letters.size() < 3) return s;
  const std::size_t at = pick(rng, letters);
  std::string out = s;
  switch (rng.uniform_index(3)) {
    case 0:
      out[at] = static_cast<char>('a' + rng.uniform_index(26));
      break;
    case 1:
      out.erase(at, 1);
      break;
    default:
      if (at + 1 < out.size() && std::isalpha(static_cast<unsigned char>(out[at + 1]))) {
        std::swap(out[at], out[at + 1]);
      } else {
        out.insert(at, 1, out[at]);
      }
  }
  return out;
}

std::string abbreviate_street(Rng& rng, const std::string& street) {
  static const std::array<std::string_view, 3> forms{"jl", "jln", "jl."};
  if (street.rfind("jalan ", 0) != 0) return street;
  return std::string(forms[rng.uniform_index(forms.size())]) + street.substr(5);
}

struct PoiDraft {
  std::string name;
  std::optional<std::string> street;
  geo::GeoPoint location;
  // Index of the restaurant it truly matches, if any.
  std::optional<std::size_t> match;
};

}  // namespace

void GenConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError(std::string(name) + " must be a probability in [0, 1]");
  };
  prob(match_fraction, "match_fraction");
  prob(p_space_variant, "p_space_variant");
  prob(p_abbreviation, "p_abbreviation");
  prob(p_suffix_append, "p_suffix_append");
  prob(p_typo, "p_typo");
  prob(p_case_variant, "p_case_variant");
  prob(p_missing_street, "p_missing_street");
  prob(p_near_miss, "p_near_miss");
  prob(p_chain, "p_chain");
  if (!(gps_jitter_sigma_m >= 0.0) || !std::isfinite(gps_jitter_sigma_m)) {
    throw ArgumentError("gps_jitter_sigma_m must be finite and >= 0");
  }
  if (!(near_miss_radius_m >= 0.0) || !std::isfinite(near_miss_radius_m)) {
    throw ArgumentError("near_miss_radius_m must be finite and >= 0");
  }
  if (!(pois_per_cell >= 0.0) || !std::isfinite(pois_per_cell)) throw ArgumentError("pois_per_cell must be >= 0");
  if (!(bbox.lat_min < bbox.lat_max) || !(bbox.lon_min < bbox.lon_max)) {
    throw ArgumentError("bounding box is empty");
  }
  if (!geo::is_valid({bbox.lat_min, bbox.lon_min}) || !geo::is_valid({bbox.lat_max, bbox.lon_max})) {
    throw ArgumentError("bounding box corners must be valid coordinates");
  }
  if (country == Country::kMERGED) throw ArgumentError("MERGED is not a country");
}

GenConfig country_preset(Country country, std::uint64_t seed) {
  GenConfig cfg;
  cfg.country = country;
  cfg.seed = seed;
  switch (country) {
    case Country::kMY:
      cfg.bbox = {3.05, 3.20, 101.60, 101.78};
      cfg.p_abbreviation = 0.3;
      cfg.p_suffix_append = 0.5;
      cfg.gps_jitter_sigma_m = 35.0;
      break;
    case Country::kSG:
      // Dense city blocks: distractors sit close, GPS is noisier, names are
      // cleaner.
      cfg.bbox = {1.27, 1.40, 103.76, 103.96};
      cfg.p_abbreviation = 0.05;
      cfg.p_suffix_append = 0.2;
      cfg.p_typo = 0.05;
      cfg.gps_jitter_sigma_m = 60.0;
      cfg.near_miss_radius_m = 150.0;
      cfg.p_near_miss = 1.0;
      break;
    case Country::kPH:
      cfg.bbox = {14.50, 14.66, 120.97, 121.12};
      cfg.pois_per_cell = 6.0;
      cfg.p_abbreviation = 0.0;
      cfg.p_suffix_append = 0.6;
      cfg.p_typo = 0.25;
      cfg.gps_jitter_sigma_m = 30.0;
      break;
    default:
      break;
  }
  return cfg;
}

GenConfig noiseless(GenConfig cfg) {
  cfg.p_space_variant = 0.0;
  cfg.p_abbreviation = 0.0;
  cfg.p_suffix_append = 0.0;
  cfg.p_typo = 0.0;
  cfg.p_case_variant = 0.0;
  cfg.p_missing_street = 0.0;
  cfg.gps_jitter_sigma_m = 0.0;
  cfg.match_placement = MatchPlacement::kJitter;
  cfg.p_near_miss = 0.0;
  cfg.pois_per_cell = 0.0;
  cfg.p_chain = 0.0;
  return cfg;
}

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  const Vocabulary& vocab = vocabulary(cfg.country);
  // Independent streams so that changing one knob does not reshuffle the
  // draws behind the others.
  Rng place_rng(derive_seed(cfg.seed, 1));
  Rng name_rng(derive_seed(cfg.seed, 2));
  Rng noise_rng(derive_seed(cfg.seed, 3));
  Rng distractor_rng(derive_seed(cfg.seed, 4));
  Rng order_rng(derive_seed(cfg.seed, 5));

  std::unordered_set<std::string> used_brands;
  std::vector<std::string> brands;
  auto fresh_brand = [&](Rng& rng) {
    for (int attempt = 0;; ++attempt) {
      std::string b = std::string(pick(rng, vocab.prefixes)) + " " + std::string(pick(rng, vocab.cores));
      if (attempt >= 20) b += " " + std::string(pick(rng, vocab.cores));
      if (attempt >= 60) b += " " + std::to_string(attempt);
      if (!used_brands.contains(b)) return b;
    }
  };

  std::vector<PlaceRecord> restaurants;
  std::vector<std::string> restaurant_brand;
  std::vector<std::optional<std::string>> restaurant_street;
  std::vector<PoiDraft> drafts;
  const std::size_t width = std::to_string(std::max<std::size_t>(cfg.n_restaurants, 1)).size() + 1;
  auto make_id = [width](char prefix, std::size_t n) {
    std::string digits = std::to_string(n);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return std::string(1, prefix) + digits;
  };

  for (std::size_t i = 0; i < cfg.n_restaurants; ++i) {
    const geo::GeoPoint loc{place_rng.uniform(cfg.bbox.lat_min, cfg.bbox.lat_max),
                            place_rng.uniform(cfg.bbox.lon_min, cfg.bbox.lon_max)};
    std::string brand;
    if (!brands.empty() && name_rng.bernoulli(cfg.p_chain)) {
      brand = pick(name_rng, brands);
    } else {
      brand = fresh_brand(name_rng);
      used_brands.insert(brand);
      brands.push_back(brand);
    }
    std::string name = brand;
    if (noise_rng.bernoulli(cfg.p_suffix_append)) {
      name += " - " + std::string(pick(noise_rng, vocab.localities));
    }
    std::optional<std::string> street = std::string(pick(name_rng, vocab.streets));
    restaurant_street.push_back(street);
    if (noise_rng.bernoulli(cfg.p_missing_street)) street.reset();
    restaurants.push_back(
        PlaceRecord::make(make_id('R', i + 1), PlaceKind::kRestaurant, name, street, loc, cfg.country));
    restaurant_brand.push_back(brand);

    if (place_rng.bernoulli(cfg.match_fraction)) {
      PoiDraft d;
      d.match = i;
      d.name = brand;
      if (noise_rng.bernoulli(cfg.p_space_variant)) d.name = space_variant(noise_rng, d.name);
      if (noise_rng.bernoulli(cfg.p_typo)) d.name = typo(noise_rng, d.name);
      if (noise_rng.bernoulli(cfg.p_case_variant)) d.name = title_case(d.name);
      d.street = restaurant_street.back();
      if (noise_rng.bernoulli(cfg.p_abbreviation)) d.street = abbreviate_street(noise_rng, *d.street);
      if (noise_rng.bernoulli(cfg.p_missing_street)) d.street.reset();
      if (cfg.match_placement == MatchPlacement::kCellUniform) {
        const geo::GeohashCell cell = geo::geohash_decode_bounds(geo::geohash_encode(loc, 6));
        d.location = {place_rng.uniform(cell.lat_min, cell.lat_max), place_rng.uniform(cell.lon_min, cell.lon_max)};
      } else if (cfg.gps_jitter_sigma_m > 0.0) {
        d.location = offset(loc, cfg.gps_jitter_sigma_m * noise_rng.normal(), cfg.gps_jitter_sigma_m * noise_rng.normal());
      } else {
        d.location = loc;
      }
      drafts.push_back(std::move(d));
    }

    if (distractor_rng.bernoulli(cfg.p_near_miss)) {
      // Same leading word and street, different brand.
      const std::string lead = brand.substr(0, brand.find(' '));
      std::string other;
      for (int attempt = 0; attempt < 50; ++attempt) {
        other = lead + " " + std::string(pick(distractor_rng, vocab.cores));
        if (other != brand) break;
      }
      if (other == brand) continue;
      PoiDraft d;
      d.name = distractor_rng.bernoulli(cfg.p_case_variant) ? title_case(other) : other;
      d.street = restaurant_street.back();
      if (distractor_rng.bernoulli(cfg.p_abbreviation)) d.street = abbreviate_street(distractor_rng, *d.street);
      if (distractor_rng.bernoulli(cfg.p_missing_street)) d.street.reset();
      const double r = cfg.near_miss_radius_m * std::sqrt(distractor_rng.uniform01());
      const double theta = 2.0 * std::numbers::pi * distractor_rng.uniform01();
      d.location = offset(loc, r * std::cos(theta), r * std::sin(theta));
      drafts.push_back(std::move(d));
    }
  }

  // Unrelated POIs spread over the box at the requested cell density.
  const double cell_lat = 180.0 / 32768.0;
  const double cell_lon = 360.0 / 32768.0;
  const double cells = (cfg.bbox.lat_max - cfg.bbox.lat_min) / cell_lat * (cfg.bbox.lon_max - cfg.bbox.lon_min) / cell_lon;
  const auto n_unrelated = static_cast<std::size_t>(std::llround(cfg.pois_per_cell * cells));
  for (std::size_t k = 0; k < n_unrelated; ++k) {
    PoiDraft d;
    std::string name;
    for (int attempt = 0;; ++attempt) {
      name = std::string(pick(distractor_rng, vocab.prefixes)) + " " + std::string(pick(distractor_rng, vocab.cores));
      if (attempt >= 20) name += " " + std::string(pick(distractor_rng, vocab.cores));
      if (!used_brands.contains(name)) break;
    }
    d.name = distractor_rng.bernoulli(cfg.p_case_variant) ? title_case(name) : name;
    d.street = std::string(pick(distractor_rng, vocab.streets));
    if (distractor_rng.bernoulli(cfg.p_abbreviation)) d.street = abbreviate_street(distractor_rng, *d.street);
    if (distractor_rng.bernoulli(cfg.p_missing_street)) d.street.reset();
    d.location = {distractor_rng.uniform(cfg.bbox.lat_min, cfg.bbox.lat_max),
                  distractor_rng.uniform(cfg.bbox.lon_min, cfg.bbox.lon_max)};
    drafts.push_back(std::move(d));
  }

  // Ids carry no hint of which POIs are matches.
  for (std::size_t i = drafts.size(); i > 1; --i) std::swap(drafts[i - 1], drafts[order_rng.uniform_index(i)]);

  Dataset out;
  std::vector<PlaceRecord> pois;
  pois.reserve(drafts.size());
  for (std::size_t k = 0; k < drafts.size(); ++k) {
    PoiDraft& d = drafts[k];
    std::string id = make_id('P', k + 1);
    if (d.match) out.truth.emplace(restaurants[*d.match].id, id);
    pois.push_back(PlaceRecord::make(std::move(id), PlaceKind::kPoi, std::move(d.name), std::move(d.street),
                                     d.location, cfg.country));
  }
  out.restaurants = PlaceTable(PlaceKind::kRestaurant, cfg.country, std::move(restaurants));
  out.pois = PlaceTable(PlaceKind::kPoi, cfg.country, std::move(pois));
  return out;
}

void write_truth(const std::filesystem::path& path, const TruthSet& truth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  csv::write_row(out, {"restaurant_id", "poi_id"});
  for (const auto& [r, p] : truth) csv::write_row(out, {r, p});
  if (!out) throw IoError(path.string(), "write failed");
}

TruthSet read_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  TruthSet truth;
  try {
    if (!reader.next(fields) || fields != std::vector<std::string>{"restaurant_id", "poi_id"}) {
      throw LoadError(path.string(), 1, "expected header restaurant_id,poi_id");
    }
    while (reader.next(fields)) {
      if (fields.size() == 1 && fields[0].empty()) continue;
      if (fields.size() != 2) throw LoadError(path.string(), reader.line(), "expected 2 fields");
      truth.emplace(fields[0], fields[1]);
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw LoadError(path.string(), reader.line(), e.what());
  }
  return truth;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());
  write_places(dir / "restaurants.csv", data.restaurants);
  write_places(dir / "pois.csv", data.pois);
  write_truth(dir / "truth.csv", data.truth);
}

}  // namespace poimatch::synth
