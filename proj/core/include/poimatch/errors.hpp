#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace poimatch {

// Invalid argument to a library function (bad precision, bad geohash
// character, too-small dataset, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value. Kept distinct from ArgumentError so the CLI
// can map it to its own exit code.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A data file could not be parsed. `line()` is 1-based; 0 means the error is
// not tied to a line (missing file, unreadable header).
class LoadError : public std::runtime_error {
 public:
  LoadError(std::string path, std::size_t line, const std::string& what);

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

// Writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& cause);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace poimatch
