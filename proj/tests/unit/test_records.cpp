#include <gtest/gtest.h>

#include <sstream>

#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/records.hpp"
#include "test_util.hpp"

namespace poimatch {
namespace {

using testing::TempDir;
using testing::write_file;

std::vector<std::vector<std::string>> read_all(const std::string& text) {
  std::istringstream in(text);
  csv::Reader reader(in);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  while (reader.next(fields)) rows.push_back(fields);
  return rows;
}

// Expects load_places to fail on `line` with a message containing `needle`.
void expect_load_error(const std::filesystem::path& path, std::size_t line, const std::string& needle) {
  try {
    load_places(path, PlaceKind::kPoi, Country::kID);
    FAIL() << "expected LoadError for " << path;
  } catch (const LoadError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    EXPECT_EQ(e.path(), path.string());
  }
}

TEST(CsvReader, QuotedFieldsAndLineEndings) {
  const auto rows = read_all("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",x,\r\nlast,row,1");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"multi\nline", "x", ""}));
  EXPECT_EQ(rows[2], (std::vector<std::string>{"last", "row", "1"}));
}

TEST(CsvReader, ReportsStartingLineOfRecord) {
  std::istringstream in("h\n\"two\nlines\"\nnext\n");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  ASSERT_TRUE(reader.next(fields));
  EXPECT_EQ(reader.line(), 1u);
  ASSERT_TRUE(reader.next(fields));
  EXPECT_EQ(reader.line(), 2u);
  ASSERT_TRUE(reader.next(fields));
  EXPECT_EQ(reader.line(), 4u);
  EXPECT_EQ(fields[0], "next");
  EXPECT_FALSE(reader.next(fields));
}

TEST(CsvReader, UnterminatedQuoteThrows) {
  std::istringstream in("a,\"never closed\n");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  EXPECT_THROW(reader.next(fields), std::runtime_error);
}

TEST(CsvWriter, EscapeRoundTrips) {
  const std::vector<std::string> row{"plain", "with,comma", "quote\"d", "new\nline", ""};
  std::ostringstream out;
  csv::write_row(out, row);
  const auto back = read_all(out.str());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], row);
  EXPECT_EQ(csv::escape("plain"), "plain");
}

TEST(CsvNumbers, StrictParsing) {
  EXPECT_EQ(csv::parse_double(" -8.5 "), -8.5);
  EXPECT_FALSE(csv::parse_double("1.5x"));
  EXPECT_FALSE(csv::parse_double(""));
  EXPECT_EQ(csv::parse_int("42"), 42);
  EXPECT_FALSE(csv::parse_int("4.2"));
  for (double v : {0.1, -8.651234567891234, 115.2, 1e-300, 123456789.123456789}) {
    EXPECT_EQ(*csv::parse_double(csv::format_roundtrip(v)), v);
  }
  EXPECT_EQ(csv::format_sig9(1.0 / 3.0), "0.333333333");
}

TEST(PlaceRecord, NormalizesAndDropsEmptyStreet) {
  const auto r = PlaceRecord::make("r1", PlaceKind::kRestaurant, "Warung  Made!", std::string(" -- "),
                                   {-8.6, 115.2}, Country::kID);
  EXPECT_EQ(r.name_norm.str(), "warungmade");
  EXPECT_EQ(r.name_raw, "Warung  Made!");
  EXPECT_FALSE(r.street_norm);
  EXPECT_FALSE(r.street_raw);

  const auto s = PlaceRecord::make("p1", PlaceKind::kPoi, "Kopi", std::string("Jl. Raya"), {0, 0}, Country::kSG);
  ASSERT_TRUE(s.street_norm);
  EXPECT_EQ(s.street_norm->str(), "jlraya");
}

TEST(PlaceRecord, RejectsBadInput) {
  EXPECT_THROW(PlaceRecord::make("", PlaceKind::kPoi, "x", std::nullopt, {0, 0}, Country::kID), ArgumentError);
  EXPECT_THROW(PlaceRecord::make("a", PlaceKind::kPoi, "x", std::nullopt, {91, 0}, Country::kID), ArgumentError);
  EXPECT_THROW(PlaceRecord::make("a", PlaceKind::kPoi, "x", std::nullopt, {0, -181}, Country::kID), ArgumentError);
  EXPECT_THROW(PlaceRecord::make("a", PlaceKind::kPoi, "!!", std::nullopt, {0, 0}, Country::kID), ArgumentError);
}

TEST(PlaceTable, IndexAndLookup) {
  std::vector<PlaceRecord> recs;
  recs.push_back(PlaceRecord::make("a", PlaceKind::kPoi, "One", std::nullopt, {-8.65, 115.21}, Country::kID));
  recs.push_back(PlaceRecord::make("b", PlaceKind::kPoi, "Two", std::nullopt, {-8.65, 115.21}, Country::kID));
  recs.push_back(PlaceRecord::make("c", PlaceKind::kPoi, "Three", std::nullopt, {1.3, 103.8}, Country::kID));
  const PlaceTable table(PlaceKind::kPoi, Country::kID, recs);
  EXPECT_EQ(table.size(), 3u);
  EXPECT_EQ(table.find("b"), 1u);
  EXPECT_FALSE(table.find("zz"));
  EXPECT_EQ(table.index().size(), 2u);
  EXPECT_EQ(table.geohash(0), table.geohash(1));
  EXPECT_EQ(table.geohash(2), geo::geohash_encode({1.3, 103.8}, 6));
  EXPECT_EQ(table.index().at(table.geohash(0)), (std::vector<std::size_t>{0, 1}));

  const auto coarse = build_geohash_index(table.records(), 1);
  std::size_t total = 0;
  for (const auto& [cell, positions] : coarse) {
    EXPECT_EQ(cell.size(), 1u);
    EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
    total += positions.size();
  }
  EXPECT_EQ(total, 3u);
}

TEST(PlaceTable, RejectsDuplicatesAndWrongKind) {
  std::vector<PlaceRecord> recs;
  recs.push_back(PlaceRecord::make("a", PlaceKind::kPoi, "One", std::nullopt, {0, 0}, Country::kID));
  recs.push_back(PlaceRecord::make("a", PlaceKind::kPoi, "Two", std::nullopt, {0, 0}, Country::kID));
  EXPECT_THROW(PlaceTable(PlaceKind::kPoi, Country::kID, recs), ArgumentError);
  recs.pop_back();
  EXPECT_THROW(PlaceTable(PlaceKind::kRestaurant, Country::kID, recs), ArgumentError);
}

TEST(Country, ParseAndPrint) {
  for (Country c : {Country::kID, Country::kMY, Country::kSG, Country::kPH, Country::kMERGED}) {
    EXPECT_EQ(parse_country(to_string(c)), c);
  }
  EXPECT_EQ(parse_country(" sg "), Country::kSG);
  EXPECT_FALSE(parse_country("XX"));
}

TEST(LoadPlaces, CsvWithBomCrlfAndQuotes) {
  TempDir dir;
  const auto path = dir / "pois.csv";
  write_file(path,
             "\xEF\xBB\xBFID,Name,Street,Lat,Lon\r\n"
             "p1,\"Kopi, Kenangan\",\"Jl. Sunset\",-8.65,115.21\r\n"
             "p2,Bakso,,-8.66,115.22\r\n"
             "\r\n");
  const PlaceTable t = load_places(path, PlaceKind::kPoi, Country::kID);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].name_raw, "Kopi, Kenangan");
  EXPECT_EQ(t[0].street_raw, "Jl. Sunset");
  EXPECT_FALSE(t[1].street_raw);
  EXPECT_DOUBLE_EQ(t[1].location.lon, 115.22);
  EXPECT_EQ(t.kind(), PlaceKind::kPoi);
}

TEST(LoadPlaces, CsvErrorsNameTheLine) {
  TempDir dir;
  const std::string header = "id,name,street,lat,lon\n";
  struct Case {
    std::string body;
    std::size_t line;
    std::string needle;
  };
  const std::vector<Case> cases{
      {"id,name,lat,lon\n", 1, "header"},
      {header + "a,A,,1,2\nb,B,,abc,2\n", 3, "bad lat value 'abc'"},
      {header + "a,A,,1,2\nb,B,,1\n", 3, "expected 5 fields"},
      {header + "a,A,,95,2\n", 2, "lat out of range"},
      {header + "a,A,,1,200\n", 2, "lon out of range"},
      {header + ",A,,1,2\n", 2, "empty id"},
      {header + "a,A,,1,2\nb,B,,1,2\na,C,,1,2\n", 4, "duplicate id 'a'"},
      {header + "a,...,,1,2\n", 2, "normalizes to an empty string"},
      {header + "a,\"open,,1,2\n", 2, "unterminated"},
      {"", 0, "missing header"},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    SCOPED_TRACE(i);
    const auto path = dir / ("case" + std::to_string(i) + ".csv");
    write_file(path, cases[i].body);
    expect_load_error(path, cases[i].line, cases[i].needle);
  }
  expect_load_error(dir / "absent.csv", 0, "cannot open");
}

TEST(LoadPlaces, Jsonl) {
  TempDir dir;
  const auto path = dir / "r.jsonl";
  write_file(path,
             "{\"id\":\"r1\",\"name\":\"Nasi Goreng\",\"street\":\"Jl. Raya\",\"lat\":-8.6,\"lon\":115.2}\n"
             "\n"
             "{\"ID\":7,\"Name\":\"Sate\",\"street\":null,\"lat\":\"-8.61\",\"lon\":115.25}\n");
  const PlaceTable t = load_places(path, PlaceKind::kRestaurant, Country::kID);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[1].id, "7");
  EXPECT_FALSE(t[1].street_raw);
  EXPECT_DOUBLE_EQ(t[1].location.lat, -8.61);
}

TEST(LoadPlaces, JsonlErrorsNameTheLine) {
  TempDir dir;
  const std::string ok = "{\"id\":\"a\",\"name\":\"A\",\"lat\":1,\"lon\":2}\n";
  const std::vector<std::tuple<std::string, std::size_t, std::string>> cases{
      {ok + "{not json}\n", 2, "invalid JSON"},
      {ok + "[1,2]\n", 2, "expected a JSON object"},
      {ok + "{\"id\":\"b\",\"name\":[1],\"lat\":1,\"lon\":2}\n", 2, "wrong type"},
      {ok + "\n{\"id\":\"b\",\"lat\":1,\"lon\":2}\n", 3, "missing one of"},
      {ok + "{\"id\":\"b\",\"name\":\"B\",\"lat\":\"x\",\"lon\":2}\n", 2, "bad lat value"},
      {ok + ok, 2, "duplicate id"},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    SCOPED_TRACE(i);
    const auto path = dir / ("case" + std::to_string(i) + ".jsonl");
    write_file(path, std::get<0>(cases[i]));
    expect_load_error(path, std::get<1>(cases[i]), std::get<2>(cases[i]));
  }
}

TEST(LoadPlaces, WhatIncludesPathAndLine) {
  TempDir dir;
  const auto path = dir / "bad.csv";
  write_file(path, "id,name,street,lat,lon\na,A,,x,1\n");
  try {
    load_places(path, PlaceKind::kPoi, Country::kID);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(std::string(e.what()).rfind(path.string() + ":2: ", 0), 0u) << e.what();
  }
}

TEST(LoadPlaces, RejectsBadPrecision) {
  TempDir dir;
  const auto path = dir / "p.csv";
  write_file(path, "id,name,street,lat,lon\n");
  EXPECT_THROW(load_places(path, PlaceKind::kPoi, Country::kID, 0), ArgumentError);
  EXPECT_THROW(load_places(path, PlaceKind::kPoi, Country::kID, 13), ArgumentError);
  EXPECT_TRUE(load_places(path, PlaceKind::kPoi, Country::kID, 12).empty());
}

TEST(WritePlaces, RoundTripIsExact) {
  TempDir dir;
  std::vector<PlaceRecord> recs;
  recs.push_back(PlaceRecord::make("x1", PlaceKind::kRestaurant, "Café \"Bali\", Ubud", std::string("Jl. Monkey\nForest"),
                                   {-8.518765432198765, 115.263456789012345}, Country::kID));
  recs.push_back(PlaceRecord::make("x2", PlaceKind::kRestaurant, "Bebek", std::nullopt, {-8.5, 115.26}, Country::kID));
  const PlaceTable original(PlaceKind::kRestaurant, Country::kID, recs);
  const auto path = dir / "out.csv";
  write_places(path, original);
  const PlaceTable back = load_places(path, PlaceKind::kRestaurant, Country::kID);
  ASSERT_EQ(back.size(), original.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, original[i].id);
    EXPECT_EQ(back[i].name_raw, original[i].name_raw);
    EXPECT_EQ(back[i].street_raw, original[i].street_raw);
    EXPECT_EQ(back[i].location.lat, original[i].location.lat);
    EXPECT_EQ(back[i].location.lon, original[i].location.lon);
    EXPECT_EQ(back.geohash(i), original.geohash(i));
  }
  write_places(dir / "again.csv", back);
  EXPECT_EQ(testing::read_file(path), testing::read_file(dir / "again.csv"));
}

}  // namespace
}  // namespace poimatch
