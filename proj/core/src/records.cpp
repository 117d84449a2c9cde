#include "poimatch/records.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"

namespace poimatch {
namespace {

constexpr std::array<std::string_view, 5> kColumns{"id", "name", "street", "lat", "lon"};

struct RawRow {
  std::string id;
  std::string name;
  std::optional<std::string> street;
  double lat = 0.0;
  double lon = 0.0;
};

double parse_coordinate(const std::string& path, std::size_t line, std::string_view field,
                        std::string_view what) {
  const auto v = csv::parse_double(field);
  if (!v) throw LoadError(path, line, "bad " + std::string(what) + " value '" + std::string(field) + "'");
  return *v;
}

std::vector<std::pair<std::size_t, RawRow>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  std::vector<std::pair<std::size_t, RawRow>> rows;
  try {
    if (!reader.next(fields)) throw LoadError(path.string(), 0, "missing header row");
    if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
    bool header_ok = fields.size() == kColumns.size();
    for (std::size_t i = 0; header_ok && i < kColumns.size(); ++i) {
      header_ok = csv::to_lower_ascii(csv::trim(fields[i])) == kColumns[i];
    }
    if (!header_ok) throw LoadError(path.string(), 1, "header must be id,name,street,lat,lon");

    while (reader.next(fields)) {
      const std::size_t line = reader.line();
      if (fields.size() == 1 && csv::trim(fields[0]).empty()) continue;
      if (fields.size() != kColumns.size()) {
        throw LoadError(path.string(), line,
                        "expected 5 fields, found " + std::to_string(fields.size()));
      }
      RawRow row;
      row.id = std::string(csv::trim(fields[0]));
      row.name = fields[1];
      if (!csv::trim(fields[2]).empty()) row.street = fields[2];
      row.lat = parse_coordinate(path.string(), line, fields[3], "lat");
      row.lon = parse_coordinate(path.string(), line, fields[4], "lon");
      rows.emplace_back(line, std::move(row));
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw LoadError(path.string(), reader.line(), e.what());
  }
  return rows;
}

std::vector<std::pair<std::size_t, RawRow>> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  std::vector<std::pair<std::size_t, RawRow>> rows;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (csv::trim(text).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string(), line, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw LoadError(path.string(), line, "expected a JSON object");
    auto get_string = [&](std::string_view key) -> std::optional<std::string> {
      for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (csv::to_lower_ascii(it.key()) != key) continue;
        if (it->is_null()) return std::nullopt;
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number()) return it->dump();
        throw LoadError(path.string(), line, "field '" + std::string(key) + "' has the wrong type");
      }
      return std::nullopt;
    };
    RawRow row;
    const auto id = get_string("id");
    const auto name = get_string("name");
    const auto lat = get_string("lat");
    const auto lon = get_string("lon");
    if (!id || !name || !lat || !lon) throw LoadError(path.string(), line, "missing one of id,name,lat,lon");
    row.id = std::string(csv::trim(*id));
    row.name = *name;
    row.street = get_string("street");
    if (row.street && csv::trim(*row.street).empty()) row.street.reset();
    row.lat = parse_coordinate(path.string(), line, *lat, "lat");
    row.lon = parse_coordinate(path.string(), line, *lon, "lon");
    rows.emplace_back(line, std::move(row));
  }
  return rows;
}

}  // namespace

std::string_view to_string(PlaceKind kind) { return kind == PlaceKind::kPoi ? "POI" : "RESTAURANT"; }

std::string_view to_string(Country country) {
  switch (country) {
    case Country::kID: return "ID";
    case Country::kMY: return "MY";
    case Country::kSG: return "SG";
    case Country::kPH: return "PH";
    case Country::kMERGED: return "MERGED";
  }
  return "?";
}

std::optional<Country> parse_country(std::string_view s) {
  const std::string lower = csv::to_lower_ascii(csv::trim(s));
  if (lower == "id") return Country::kID;
  if (lower == "my") return Country::kMY;
  if (lower == "sg") return Country::kSG;
  if (lower == "ph") return Country::kPH;
  if (lower == "merged") return Country::kMERGED;
  return std::nullopt;
}

PlaceRecord PlaceRecord::make(std::string id, PlaceKind kind, std::string name, std::optional<std::string> street,
                              geo::GeoPoint location, Country country) {
  if (id.empty()) throw ArgumentError("record id is empty");
  if (!geo::is_valid(location)) {
    throw ArgumentError("coordinate out of range for record '" + id + "'");
  }
  PlaceRecord r;
  r.id = std::move(id);
  r.kind = kind;
  r.name_norm = text::normalize_text(name);
  if (r.name_norm.empty()) throw ArgumentError("name of record '" + r.id + "' normalizes to an empty string");
  r.name_raw = std::move(name);
  if (street) {
    text::NormalizedText norm = text::normalize_text(*street);
    if (!norm.empty()) {
      r.street_norm = std::move(norm);
      r.street_raw = std::move(street);
    }
  }
  r.location = location;
  r.country = country;
  return r;
}

GeohashIndex build_geohash_index(std::span<const PlaceRecord> records, int precision) {
  GeohashIndex index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    index[geo::geohash_encode(records[i].location, precision)].push_back(i);
  }
  return index;
}

PlaceTable::PlaceTable(PlaceKind kind, Country country, std::vector<PlaceRecord> records, int precision)
    : kind_(kind), country_(country), precision_(precision), records_(std::move(records)) {
  cells_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const PlaceRecord& r = records_[i];
    if (r.kind != kind) throw ArgumentError("record '" + r.id + "' has the wrong kind for this table");
    if (!by_id_.emplace(r.id, i).second) throw ArgumentError("duplicate id '" + r.id + "'");
    cells_.push_back(geo::geohash_encode(r.location, precision));
    index_[cells_.back()].push_back(i);
  }
}

std::optional<std::size_t> PlaceTable::find(std::string_view id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

PlaceTable load_places(const std::filesystem::path& path, PlaceKind kind, Country country, int precision) {
  if (precision < geo::kMinPrecision || precision > geo::kMaxPrecision) {
    throw ArgumentError("geohash precision must be in [1, 12]");
  }
  const bool jsonl = path.extension() == ".jsonl";
  const auto rows = jsonl ? read_jsonl(path) : read_csv(path);

  std::vector<PlaceRecord> records;
  records.reserve(rows.size());
  std::map<std::string, std::size_t, std::less<>> seen;
  for (const auto& [line, row] : rows) {
    if (row.lat < -90.0 || row.lat > 90.0) throw LoadError(path.string(), line, "lat out of range [-90, 90]");
    if (row.lon < -180.0 || row.lon > 180.0) throw LoadError(path.string(), line, "lon out of range [-180, 180]");
    if (row.id.empty()) throw LoadError(path.string(), line, "empty id");
    if (const auto [it, inserted] = seen.emplace(row.id, line); !inserted) {
      throw LoadError(path.string(), line,
                      "duplicate id '" + row.id + "' (first seen on line " + std::to_string(it->second) + ")");
    }
    try {
      records.push_back(PlaceRecord::make(row.id, kind, row.name, row.street, {row.lat, row.lon}, country));
    } catch (const ArgumentError& e) {
      throw LoadError(path.string(), line, e.what());
    }
  }
  return PlaceTable(kind, country, std::move(records), precision);
}

void write_places(const std::filesystem::path& path, const PlaceTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  csv::write_row(out, {"id", "name", "street", "lat", "lon"});
  for (const PlaceRecord& r : table.records()) {
    csv::write_row(out, {r.id, r.name_raw, r.street_raw.value_or(""), csv::format_roundtrip(r.location.lat),
                         csv::format_roundtrip(r.location.lon)});
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace poimatch
