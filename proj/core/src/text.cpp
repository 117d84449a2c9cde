#include "poimatch/text.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <utility>

#include "poimatch/errors.hpp"

namespace poimatch::text {
namespace {

constexpr char32_t kDrop = 0;
constexpr char32_t kReplacement = 0xFFFD;

struct Range {
  char32_t lo;
  char32_t hi;
};

// Uncased letters and decimal digits outside the Latin/Greek/Cyrillic blocks
// handled explicitly in fold(), plus IPA and modifier letters.
constexpr std::array<Range, 35> kUncasedAlnum{{
    {0x05D0, 0x05EA}, {0x0620, 0x064A}, {0x0660, 0x0669}, {0x0671, 0x06D3}, {0x06F0, 0x06F9},
    {0x0904, 0x0939}, {0x093D, 0x093D}, {0x0950, 0x0950}, {0x0958, 0x0961}, {0x0966, 0x096F},
    {0x0E01, 0x0E30}, {0x0E32, 0x0E33}, {0x0E40, 0x0E46}, {0x0E50, 0x0E59}, {0x1000, 0x102A},
    {0x1040, 0x1049}, {0x1100, 0x11FF}, {0x1780, 0x17B3}, {0x17E0, 0x17E9}, {0x3041, 0x3096},
    {0x309D, 0x309F}, {0x30A1, 0x30FA}, {0x30FC, 0x30FF}, {0x3400, 0x4DBF}, {0x4E00, 0x9FFF},
    {0xAC00, 0xD7A3}, {0xFF10, 0xFF19}, {0xFF41, 0xFF5A}, {0xFF66, 0xFF9D}, {0x02B0, 0x02C1},
    {0x02C6, 0x02D1}, {0x02E0, 0x02E4}, {0x02EC, 0x02EC}, {0x02EE, 0x02EE}, {0x0250, 0x02AF}}};

// Irregular uppercase -> lowercase pairs in Latin Extended-B.
constexpr std::array<std::pair<char32_t, char32_t>, 44> kLatinExtBIrregular{{
    {0x0181, 0x0253}, {0x0182, 0x0183}, {0x0184, 0x0185}, {0x0186, 0x0254}, {0x0187, 0x0188},
    {0x0189, 0x0256}, {0x018A, 0x0257}, {0x018B, 0x018C}, {0x018E, 0x01DD}, {0x018F, 0x0259},
    {0x0190, 0x025B}, {0x0191, 0x0192}, {0x0193, 0x0260}, {0x0194, 0x0263}, {0x0196, 0x0269},
    {0x0197, 0x0268}, {0x0198, 0x0199}, {0x019C, 0x026F}, {0x019D, 0x0272}, {0x019F, 0x0275},
    {0x01A0, 0x01A1}, {0x01A2, 0x01A3}, {0x01A4, 0x01A5}, {0x01A6, 0x0280}, {0x01A7, 0x01A8},
    {0x01A9, 0x0283}, {0x01AC, 0x01AD}, {0x01AE, 0x0288}, {0x01AF, 0x01B0}, {0x01B1, 0x028A},
    {0x01B2, 0x028B}, {0x01B3, 0x01B4}, {0x01B5, 0x01B6}, {0x01B7, 0x0292}, {0x01B8, 0x01B9},
    {0x01BC, 0x01BD}, {0x01C4, 0x01C6}, {0x01C5, 0x01C6}, {0x01C7, 0x01C9}, {0x01C8, 0x01C9},
    {0x01CA, 0x01CC}, {0x01CB, 0x01CC}, {0x01F1, 0x01F3}, {0x01F2, 0x01F3}}};

constexpr bool in(char32_t c, char32_t lo, char32_t hi) { return c >= lo && c <= hi; }
constexpr bool even(char32_t c) { return (c & 1) == 0; }

// Lowercase form of a letter or digit, or kDrop for anything else.
char32_t fold(char32_t c) {
  if (c < 0x80) {
    if (in(c, 'a', 'z') || in(c, '0', '9')) return c;
    if (in(c, 'A', 'Z')) return c + 0x20;
    return kDrop;
  }
  // Latin-1 Supplement
  if (c < 0x100) {
    if (c == 0xAA || c == 0xB5 || c == 0xBA || c == 0xDF) return c;
    if (c == 0xD7 || c == 0xF7) return kDrop;
    if (in(c, 0xC0, 0xDE)) return c + 0x20;
    if (in(c, 0xE0, 0xFF)) return c;
    return kDrop;
  }
  // Latin Extended-A
  if (c < 0x180) {
    if (c == 0x130) return U'i';
    if (c == 0x131 || c == 0x138 || c == 0x149 || c == 0x17F) return c;
    if (c == 0x178) return 0xFF;
    if (in(c, 0x139, 0x148) || in(c, 0x179, 0x17E)) return even(c) ? c : c + 1;
    return even(c) ? c + 1 : c;
  }
  // Latin Extended-B
  if (c < 0x250) {
    for (const auto& [upper, lower] : kLatinExtBIrregular) {
      if (c == upper) return lower;
    }
    if (in(c, 0x1CD, 0x1DC)) return even(c) ? c : c + 1;
    if (in(c, 0x1DE, 0x1EF) || in(c, 0x1F8, 0x21F) || in(c, 0x222, 0x233)) return even(c) ? c + 1 : c;
    if (c == 0x1F4) return 0x1F5;
    return c;
  }
  // Combining diacritics are marks, not letters.
  if (in(c, 0x300, 0x36F)) return kDrop;
  // Greek
  if (in(c, 0x370, 0x3FF)) {
    if (c == 0x386) return 0x3AC;
    if (in(c, 0x388, 0x38A)) return c + 0x25;
    if (c == 0x38C) return 0x3CC;
    if (in(c, 0x38E, 0x38F)) return c + 0x3F;
    if (in(c, 0x391, 0x3A1) || in(c, 0x3A3, 0x3AB)) return c + 0x20;
    if (c == 0x390 || in(c, 0x3AC, 0x3CE) || in(c, 0x3D0, 0x3F5) || in(c, 0x3F7, 0x3FF)) return c;
    return kDrop;
  }
  // Cyrillic
  if (in(c, 0x400, 0x4FF)) {
    if (in(c, 0x400, 0x40F)) return c + 0x50;
    if (in(c, 0x410, 0x42F)) return c + 0x20;
    if (in(c, 0x430, 0x45F)) return c;
    if (in(c, 0x482, 0x489)) return kDrop;
    if (c == 0x4C0) return 0x4CF;
    if (c == 0x4CF) return c;
    if (in(c, 0x4C1, 0x4CE)) return even(c) ? c : c + 1;
    return even(c) ? c + 1 : c;
  }
  // Latin Extended Additional (Vietnamese precomposed letters live here).
  if (in(c, 0x1E00, 0x1EFF)) {
    if (c == 0x1E9E) return 0xDF;
    if (in(c, 0x1E96, 0x1E9F)) return c;
    return even(c) ? c + 1 : c;
  }
  // Fullwidth Latin capitals
  if (in(c, 0xFF21, 0xFF3A)) return c + 0x20;
  for (const auto& r : kUncasedAlnum) {
    if (in(c, r.lo, r.hi)) return c;
  }
  return kDrop;
}

void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

__extension__ typedef unsigned __int128 u128;

u128 gcd128(u128 a, u128 b) {
  while (b != 0) {
    const u128 r = a % b;
    a = b;
    b = r;
  }
  return a;
}

Fraction reduce(u128 num, u128 den) {
  const u128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return {static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
}

constexpr std::size_t kMaxExactLength = 1'000'000;

void check_length(std::size_t la, std::size_t lb) {
  if (std::max(la, lb) > kMaxExactLength) throw ArgumentError("string too long for exact metric");
}

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    bool ok = i + len <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (!ok || cp < min || cp > 0x10FFFF || in(cp, 0xD800, 0xDFFF)) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

NormalizedText normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : decode_utf8(s)) {
    const char32_t f = fold(c);
    if (f != kDrop) append_utf8(out, f);
  }
  return NormalizedText(std::move(out));
}

std::size_t levenshtein_raw(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + cost});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein_raw(std::string_view a, std::string_view b) {
  return levenshtein_raw(decode_utf8(a), decode_utf8(b));
}

Fraction levenshtein_norm_exact(std::string_view a, std::string_view b) {
  const std::u32string ua = decode_utf8(a);
  const std::u32string ub = decode_utf8(b);
  const std::size_t total = ua.size() + ub.size();
  if (total == 0) return {0, 1};
  check_length(ua.size(), ub.size());
  return reduce(levenshtein_raw(ua, ub), total);
}

double levenshtein_norm(std::string_view a, std::string_view b) {
  return levenshtein_norm_exact(a, b).value();
}

JaroCounts jaro_counts(std::u32string_view a, std::u32string_view b) {
  // Canonical argument order makes every derived quantity exactly symmetric.
  if (a.size() > b.size() || (a.size() == b.size() && a > b)) std::swap(a, b);

  JaroCounts counts{a.size(), b.size(), 0, 0};
  if (a.empty() || b.empty()) return counts;

  const std::size_t longest = std::max(a.size(), b.size());
  const std::size_t window = longest / 2 >= 1 ? longest / 2 - 1 : 0;

  std::vector<bool> b_used(b.size(), false);
  std::vector<std::size_t> a_match_pos;
  a_match_pos.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t lo = i > window ? i - window : 0;
    const std::size_t hi = std::min(b.size(), i + window + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (!b_used[j] && a[i] == b[j]) {
        b_used[j] = true;
        a_match_pos.push_back(i);
        break;
      }
    }
  }
  counts.matches = a_match_pos.size();

  std::size_t k = 0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (!b_used[j]) continue;
    if (a[a_match_pos[k]] != b[j]) ++counts.transpositions;
    ++k;
  }
  return counts;
}

Fraction jaro_similarity_exact(std::string_view a, std::string_view b) {
  const std::u32string ua = decode_utf8(a);
  const std::u32string ub = decode_utf8(b);
  if (ua.empty() && ub.empty()) return {1, 1};
  check_length(ua.size(), ub.size());
  const JaroCounts jc = jaro_counts(ua, ub);
  if (jc.matches == 0) return {0, 1};

  const u128 c = jc.matches;
  const u128 t = jc.transpositions;
  const u128 la = jc.len_a;
  const u128 lb = jc.len_b;
  // (1/3)(c/la + c/lb + (c - t/2)/c) over the common denominator 6·c·la·lb.
  const u128 num = 2 * c * c * lb + 2 * c * c * la + (2 * c - t) * la * lb;
  const u128 den = 6 * c * la * lb;
  return reduce(num, den);
}

Fraction jaro_distance_exact(std::string_view a, std::string_view b) {
  const Fraction sim = jaro_similarity_exact(a, b);
  return {sim.den - sim.num, sim.den};
}

double jaro_similarity(std::string_view a, std::string_view b) {
  return jaro_similarity_exact(a, b).value();
}

double jaro_distance(std::string_view a, std::string_view b) {
  return jaro_distance_exact(a, b).value();
}

std::string expand_street_abbreviations(std::string_view raw) {
  std::string out;
  out.reserve(raw.size() + 8);
  std::size_t i = 0;
  auto is_word = [](char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
  };
  while (i < raw.size()) {
    if (!is_word(raw[i])) {
      out.push_back(raw[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && is_word(raw[j])) ++j;
    std::string token(raw.substr(i, j - i));
    std::string lower = token;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](char ch) { return ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch + 32) : ch; });
    out += (lower == "jl" || lower == "jln") ? std::string("jalan") : token;
    i = j;
  }
  return out;
}

}  // namespace poimatch::text
