#include "poimatch_cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "poimatch/errors.hpp"
#include "poimatch_cli/digest.hpp"

namespace poimatch::cli {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void get_unsigned(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where(key) + " must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get_seed(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw ConfigError(where(key) + " must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void get_weights(const char* key, std::array<double, 2>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(where(key) + " must be a two-element number array");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key " + where(k.c_str()));
    }
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_;
    if (key) p += (p.empty() ? "" : ".") + std::string(key);
    return p.empty() ? "config" : "'" + p + "'";
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Country parse_country_or_throw(const std::string& s, const std::string& where) {
  const auto c = parse_country(s);
  if (!c || *c == Country::kMERGED) throw ConfigError(where + ": unknown country '" + s + "'");
  return *c;
}

void read_tree(Section s, TreeParams& p) {
  s.get("max_depth", p.max_depth);
  s.get_unsigned("min_leaf", p.min_leaf);
  s.get_weights("class_weight", p.class_weight);
  s.finish();
}

json tree_json(const TreeParams& p) {
  return {{"max_depth", p.max_depth}, {"min_leaf", p.min_leaf}, {"class_weight", p.class_weight}};
}

}  // namespace

void RunConfig::finalize() {
  if (country == Country::kMERGED) throw ConfigError("country must not be MERGED");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  blocking.workers = workers;
  forest.workers = workers;
  forest.seed = seed;
  adaboost.seed = seed;
  gbm.seed = seed;
  annotation.seed = seed;
  generator.seed = seed;
  generator.country = country;
  if (port < 0 || port > 65535) throw ConfigError("port must be in [0, 65535]");
  if (experiment_countries.size() < 2) throw ConfigError("experiment.countries needs at least two countries");
  if (experiment_models.empty()) throw ConfigError("experiment.models must not be empty");
  try {
    blocking.validate();
    split().validate();
    validate(tree);
    validate(forest);
    validate(adaboost);
    validate(gbm);
    validate(annotation.tree);
    generator.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ModelParams RunConfig::model_params(ModelKind kind) const {
  switch (kind) {
    case ModelKind::kTree: return tree;
    case ModelKind::kForest: return forest;
    case ModelKind::kAdaBoost: return adaboost;
    case ModelKind::kGbm: return gbm;
  }
  return tree;
}

RunConfig parse_config(const json& doc, std::optional<Country> country_override) {
  RunConfig cfg;
  Section root(doc, "");
  root.get_seed("seed", cfg.seed);
  std::string country = std::string(to_string(cfg.country));
  root.get("country", country);
  cfg.country = country_override ? *country_override : parse_country_or_throw(country, "'country'");
  cfg.generator = synth::country_preset(cfg.country);
  root.get("workers", cfg.workers);

  if (root.has("blocking")) {
    Section s = root.sub("blocking");
    s.get("geohash_precision", cfg.blocking.geohash_precision);
    s.get_unsigned("top_k", cfg.blocking.top_k);
    s.get("name_lev_threshold", cfg.blocking.name_lev_threshold);
    s.get("neighbor_expansion", cfg.blocking.neighbor_expansion);
    s.get("street_impute", cfg.blocking.street_impute);
    s.get("expand_street_abbreviations", cfg.blocking.expand_street_abbreviations);
    s.finish();
  }
  if (root.has("split")) {
    Section s = root.sub("split");
    s.get("train_fraction", cfg.train_fraction);
    s.finish();
  }
  if (root.has("models")) {
    Section m = root.sub("models");
    if (m.has("tree")) read_tree(m.sub("tree"), cfg.tree);
    if (m.has("forest")) {
      Section s = m.sub("forest");
      s.get_unsigned("n_trees", cfg.forest.n_trees);
      s.get_unsigned("max_features", cfg.forest.max_features);
      s.get("bootstrap", cfg.forest.bootstrap);
      s.get("max_depth", cfg.forest.tree.max_depth);
      s.get_unsigned("min_leaf", cfg.forest.tree.min_leaf);
      s.get_weights("class_weight", cfg.forest.tree.class_weight);
      s.finish();
    }
    if (m.has("adaboost")) {
      Section s = m.sub("adaboost");
      s.get_unsigned("n_rounds", cfg.adaboost.n_rounds);
      s.get("base_depth", cfg.adaboost.base_depth);
      s.get_weights("class_weight", cfg.adaboost.class_weight);
      s.finish();
    }
    if (m.has("gbm")) {
      Section s = m.sub("gbm");
      s.get_unsigned("n_trees", cfg.gbm.n_trees);
      s.get("learning_rate", cfg.gbm.learning_rate);
      s.get("max_depth", cfg.gbm.max_depth);
      s.get_unsigned("min_leaf", cfg.gbm.min_leaf);
      s.get("l2", cfg.gbm.l2);
      s.get_weights("class_weight", cfg.gbm.class_weight);
      s.finish();
    }
    m.finish();
  }
  if (root.has("annotation")) {
    Section s = root.sub("annotation");
    s.get_unsigned("initial", cfg.annotation.initial);
    s.get_unsigned("batch", cfg.annotation.batch);
    s.get_unsigned("rounds", cfg.annotation.rounds);
    if (s.has("bootstrap_tree")) read_tree(s.sub("bootstrap_tree"), cfg.annotation.tree);
    s.finish();
  }
  if (root.has("generator")) {
    Section s = root.sub("generator");
    synth::GenConfig& g = cfg.generator;
    s.get_unsigned("n_restaurants", g.n_restaurants);
    s.get("pois_per_cell", g.pois_per_cell);
    s.get("match_fraction", g.match_fraction);
    s.get("p_space_variant", g.p_space_variant);
    s.get("p_abbreviation", g.p_abbreviation);
    s.get("p_suffix_append", g.p_suffix_append);
    s.get("p_typo", g.p_typo);
    s.get("p_case_variant", g.p_case_variant);
    s.get("p_missing_street", g.p_missing_street);
    s.get("gps_jitter_sigma_m", g.gps_jitter_sigma_m);
    s.get("p_near_miss", g.p_near_miss);
    s.get("near_miss_radius_m", g.near_miss_radius_m);
    s.get("p_chain", g.p_chain);
    std::string placement = g.match_placement == synth::MatchPlacement::kJitter ? "jitter" : "cell_uniform";
    s.get("match_placement", placement);
    if (placement == "jitter") {
      g.match_placement = synth::MatchPlacement::kJitter;
    } else if (placement == "cell_uniform") {
      g.match_placement = synth::MatchPlacement::kCellUniform;
    } else {
      throw ConfigError("'generator.match_placement' must be \"jitter\" or \"cell_uniform\"");
    }
    if (s.has("bbox")) {
      Section b = s.sub("bbox");
      b.get("lat_min", g.bbox.lat_min);
      b.get("lat_max", g.bbox.lat_max);
      b.get("lon_min", g.bbox.lon_min);
      b.get("lon_max", g.bbox.lon_max);
      b.finish();
    }
    s.finish();
  }
  if (root.has("experiment")) {
    Section s = root.sub("experiment");
    std::vector<std::string> countries;
    std::vector<std::string> models;
    s.get("countries", countries);
    s.get("models", models);
    if (s.has("countries")) {
      cfg.experiment_countries.clear();
      for (const std::string& c : countries) {
        const Country parsed = parse_country_or_throw(c, "'experiment.countries'");
        if (std::find(cfg.experiment_countries.begin(), cfg.experiment_countries.end(), parsed) !=
            cfg.experiment_countries.end()) {
          throw ConfigError("'experiment.countries' lists " + c + " twice");
        }
        cfg.experiment_countries.push_back(parsed);
      }
    }
    if (s.has("models")) {
      cfg.experiment_models.clear();
      for (const std::string& m : models) {
        const auto kind = parse_model_kind(m);
        if (!kind) throw ConfigError("'experiment.models': unknown model '" + m + "'");
        cfg.experiment_models.push_back(*kind);
      }
    }
    s.finish();
  }
  if (root.has("serve")) {
    Section s = root.sub("serve");
    s.get("host", cfg.host);
    s.get("port", cfg.port);
    s.finish();
  }
  root.finish();
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::string& path, std::optional<Country> country) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path, 0, "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, country);
}

json to_json(const RunConfig& cfg) {
  const synth::GenConfig& g = cfg.generator;
  std::vector<std::string> countries;
  for (Country c : cfg.experiment_countries) countries.emplace_back(to_string(c));
  std::vector<std::string> models;
  for (ModelKind m : cfg.experiment_models) models.emplace_back(to_string(m));
  json j;
  j["seed"] = cfg.seed;
  j["country"] = std::string(to_string(cfg.country));
  j["workers"] = cfg.workers;
  j["blocking"] = {{"geohash_precision", cfg.blocking.geohash_precision},
                   {"top_k", cfg.blocking.top_k},
                   {"name_lev_threshold", cfg.blocking.name_lev_threshold},
                   {"neighbor_expansion", cfg.blocking.neighbor_expansion},
                   {"street_impute", cfg.blocking.street_impute},
                   {"expand_street_abbreviations", cfg.blocking.expand_street_abbreviations}};
  j["split"] = {{"train_fraction", cfg.train_fraction}};
  j["models"] = {
      {"tree", tree_json(cfg.tree)},
      {"forest",
       {{"n_trees", cfg.forest.n_trees},
        {"max_features", cfg.forest.max_features},
        {"bootstrap", cfg.forest.bootstrap},
        {"max_depth", cfg.forest.tree.max_depth},
        {"min_leaf", cfg.forest.tree.min_leaf},
        {"class_weight", cfg.forest.tree.class_weight}}},
      {"adaboost",
       {{"n_rounds", cfg.adaboost.n_rounds}, {"base_depth", cfg.adaboost.base_depth},
        {"class_weight", cfg.adaboost.class_weight}}},
      {"gbm",
       {{"n_trees", cfg.gbm.n_trees},
        {"learning_rate", cfg.gbm.learning_rate},
        {"max_depth", cfg.gbm.max_depth},
        {"min_leaf", cfg.gbm.min_leaf},
        {"l2", cfg.gbm.l2},
        {"class_weight", cfg.gbm.class_weight}}}};
  j["annotation"] = {{"initial", cfg.annotation.initial},
                     {"batch", cfg.annotation.batch},
                     {"rounds", cfg.annotation.rounds},
                     {"bootstrap_tree", tree_json(cfg.annotation.tree)}};
  j["generator"] = {{"n_restaurants", g.n_restaurants},
                    {"pois_per_cell", g.pois_per_cell},
                    {"match_fraction", g.match_fraction},
                    {"p_space_variant", g.p_space_variant},
                    {"p_abbreviation", g.p_abbreviation},
                    {"p_suffix_append", g.p_suffix_append},
                    {"p_typo", g.p_typo},
                    {"p_case_variant", g.p_case_variant},
                    {"p_missing_street", g.p_missing_street},
                    {"gps_jitter_sigma_m", g.gps_jitter_sigma_m},
                    {"match_placement", g.match_placement == synth::MatchPlacement::kJitter ? "jitter" : "cell_uniform"},
                    {"p_near_miss", g.p_near_miss},
                    {"near_miss_radius_m", g.near_miss_radius_m},
                    {"p_chain", g.p_chain},
                    {"bbox",
                     {{"lat_min", g.bbox.lat_min},
                      {"lat_max", g.bbox.lat_max},
                      {"lon_min", g.bbox.lon_min},
                      {"lon_max", g.bbox.lon_max}}}};
  j["experiment"] = {{"countries", countries}, {"models", models}};
  j["serve"] = {{"host", cfg.host}, {"port", cfg.port}};
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  // workers never changes an artifact, so it stays out of the hash.
  json j = to_json(cfg);
  j.erase("workers");
  return sha256_hex(j.dump());
}

}  // namespace poimatch::cli
