#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace poimatch::text {

// Lowercase letters and digits only. Only normalize_text() constructs one.
class NormalizedText {
 public:
  NormalizedText() = default;

  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }
  operator std::string_view() const { return value_; }

  friend bool operator==(const NormalizedText&, const NormalizedText&) = default;
  friend NormalizedText normalize_text(std::string_view s);

 private:
  explicit NormalizedText(std::string v) : value_(std::move(v)) {}
  std::string value_;
};

// Lowercases, then drops every code point that is not a letter or a digit.
// Invalid UTF-8 bytes are dropped.
NormalizedText normalize_text(std::string_view s);

// Decodes UTF-8 into scalar values; malformed sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Exact non-negative rational, always reduced, den > 0.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

// Unit-cost insert/delete/substitute distance over code points.
std::size_t levenshtein_raw(std::string_view a, std::string_view b);
std::size_t levenshtein_raw(std::u32string_view a, std::u32string_view b);

// levenshtein_raw(a, b) / (|a| + |b|); 0 when both are empty.
Fraction levenshtein_norm_exact(std::string_view a, std::string_view b);
double levenshtein_norm(std::string_view a, std::string_view b);

struct JaroCounts {
  std::size_t len_a = 0;
  std::size_t len_b = 0;
  std::size_t matches = 0;
  // Matched positions whose characters disagree when the two matched
  // sequences are read in order (so the formula uses transpositions / 2).
  std::size_t transpositions = 0;
};

// Match window is max(0, floor(max(|a|, |b|) / 2) - 1).
JaroCounts jaro_counts(std::u32string_view a, std::u32string_view b);

// (1/3)(c/|a| + c/|b| + (c - t/2)/c); 0 when c == 0, 1 when both empty.
Fraction jaro_similarity_exact(std::string_view a, std::string_view b);
Fraction jaro_distance_exact(std::string_view a, std::string_view b);
double jaro_similarity(std::string_view a, std::string_view b);
double jaro_distance(std::string_view a, std::string_view b);

// Rewrites the standalone tokens "jl" and "jln" to "jalan" in raw
// (unnormalized) text. Opt-in; the default pipeline applies no dictionary.
std::string expand_street_abbreviations(std::string_view raw);

}  // namespace poimatch::text
