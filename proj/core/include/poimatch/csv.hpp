#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace poimatch::csv {

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
// newlines. Accepts LF or CRLF line endings.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Reads the next record into `fields`. Returns false at end of input.
  // Throws std::runtime_error on an unterminated quoted field.
  bool next(std::vector<std::string>& fields);

  // 1-based physical line on which the last returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t next_line_ = 1;
  std::size_t record_line_ = 0;
};

std::string escape(std::string_view field);

// Writes one record terminated by '\n'.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// "%.9g"
std::string format_sig9(double v);
// Shortest representation that parses back to the same double.
std::string format_roundtrip(double v);

// Strict parse of the whole (trimmed) field.
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

}  // namespace poimatch::csv
