#include "poimatch/errors.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "poimatch/random.hpp"

namespace poimatch {

LoadError::LoadError(std::string path, std::size_t line, const std::string& what)
    : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
      path_(std::move(path)),
      line_(line) {}

IoError::IoError(std::string path, const std::string& cause)
    : std::runtime_error(path + ": " + cause), path_(std::move(path)) {}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace poimatch
