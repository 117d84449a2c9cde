#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poimatch/blocking.hpp"
#include "poimatch/bootstrap.hpp"
#include "poimatch/records.hpp"
#include "poimatch/synthgen.hpp"
#include "poimatch/trees.hpp"

namespace poimatch::cli {

// Everything a pipeline command may need. Defaults mirror the library
// defaults; `generator` starts from the preset of `country`.
struct RunConfig {
  std::uint64_t seed = 0;
  Country country = Country::kID;
  unsigned workers = 1;

  BlockingConfig blocking;
  double train_fraction = 0.8;

  TreeParams tree;
  ForestParams forest;
  AdaBoostParams adaboost;
  GbmParams gbm;

  ProtocolPlan annotation;
  synth::GenConfig generator = synth::country_preset(Country::kID);

  std::vector<Country> experiment_countries{Country::kID, Country::kSG};
  std::vector<ModelKind> experiment_models{kAllModelKinds.begin(), kAllModelKinds.end()};

  std::string host = "127.0.0.1";
  int port = 8080;

  // Pushes `seed` and `workers` into every component and validates. Throws
  // ConfigError.
  void finalize();

  ModelParams model_params(ModelKind kind) const;
  SplitSpec split() const { return {train_fraction, seed}; }
};

// Parses a JSON config document on top of the defaults. Unknown keys and
// wrongly typed values are ConfigErrors.
// `country` replaces the document's country (and with it the generator
// preset the document's generator keys are applied to).
RunConfig parse_config(const nlohmann::json& doc, std::optional<Country> country = std::nullopt);
RunConfig load_config(const std::string& path, std::optional<Country> country = std::nullopt);

nlohmann::json to_json(const RunConfig& cfg);

// SHA-256 of the canonical JSON dump.
std::string config_hash(const RunConfig& cfg);

}  // namespace poimatch::cli
