#include <fstream>
#include <sstream>

#include "json.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/trees.hpp"

namespace poimatch {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;
constexpr std::string_view kFormatName = "poimatch-model";

json params_to_json(const ModelParams& params) {
  return std::visit(
      [](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TreeParams>) {
          return {{"max_depth", p.max_depth}, {"min_leaf", p.min_leaf}, {"class_weight", p.class_weight}};
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          return {{"n_trees", p.n_trees},
                  {"max_features", p.max_features},
                  {"bootstrap", p.bootstrap},
                  {"seed", p.seed},
                  {"tree",
                   {{"max_depth", p.tree.max_depth},
                    {"min_leaf", p.tree.min_leaf},
                    {"class_weight", p.tree.class_weight}}}};
        } else if constexpr (std::is_same_v<P, AdaBoostParams>) {
          return {{"n_rounds", p.n_rounds},
                  {"base_depth", p.base_depth},
                  {"class_weight", p.class_weight},
                  {"seed", p.seed}};
        } else {
          return {{"n_trees", p.n_trees},      {"learning_rate", p.learning_rate},
                  {"max_depth", p.max_depth},  {"min_leaf", p.min_leaf},
                  {"l2", p.l2},                {"class_weight", p.class_weight},
                  {"seed", p.seed}};
        }
      },
      params);
}

ModelParams params_from_json(ModelKind kind, const json& j) {
  switch (kind) {
    case ModelKind::kTree: {
      TreeParams p;
      p.max_depth = j.at("max_depth").get<int>();
      p.min_leaf = j.at("min_leaf").get<std::size_t>();
      p.class_weight = j.at("class_weight").get<std::array<double, 2>>();
      return p;
    }
    case ModelKind::kForest: {
      ForestParams p;
      p.n_trees = j.at("n_trees").get<std::size_t>();
      p.max_features = j.at("max_features").get<std::size_t>();
      p.bootstrap = j.at("bootstrap").get<bool>();
      p.seed = j.at("seed").get<std::uint64_t>();
      const json& t = j.at("tree");
      p.tree.max_depth = t.at("max_depth").get<int>();
      p.tree.min_leaf = t.at("min_leaf").get<std::size_t>();
      p.tree.class_weight = t.at("class_weight").get<std::array<double, 2>>();
      return p;
    }
    case ModelKind::kAdaBoost: {
      AdaBoostParams p;
      p.n_rounds = j.at("n_rounds").get<std::size_t>();
      p.base_depth = j.at("base_depth").get<int>();
      p.class_weight = j.at("class_weight").get<std::array<double, 2>>();
      p.seed = j.at("seed").get<std::uint64_t>();
      return p;
    }
    case ModelKind::kGbm: {
      GbmParams p;
      p.n_trees = j.at("n_trees").get<std::size_t>();
      p.learning_rate = j.at("learning_rate").get<double>();
      p.max_depth = j.at("max_depth").get<int>();
      p.min_leaf = j.at("min_leaf").get<std::size_t>();
      p.l2 = j.at("l2").get<double>();
      p.class_weight = j.at("class_weight").get<std::array<double, 2>>();
      p.seed = j.at("seed").get<std::uint64_t>();
      return p;
    }
  }
  throw ArgumentError("unknown model kind");
}

}  // namespace

std::string model_to_json(const TreeModel& model) {
  json trees = json::array();
  for (std::size_t t = 0; t < model.trees().size(); ++t) {
    json nodes = json::array();
    for (const TreeNode& n : model.trees()[t].nodes()) {
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"value", n.value}});
    }
    trees.push_back({{"weight", model.tree_weights()[t]}, {"nodes", std::move(nodes)}});
  }
  json j = {{"format", kFormatName},
            {"version", kFormatVersion},
            {"kind", to_string(model.kind())},
            {"seed", model.seed()},
            {"hyperparameters", params_to_json(model.params())},
            {"feature_names", kFeatureNames},
            {"init_score", model.init_score()},
            {"base_rate", model.base_rate()},
            {"importances", model.importances()},
            {"trees", std::move(trees)}};
  if (model.split()) {
    j["split"] = {{"train_fraction", model.split()->train_fraction}, {"seed", model.split()->seed}};
  }
  return j.dump(1);
}

TreeModel model_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormatName) throw ArgumentError("not a poimatch model file");
    const int version = j.at("version").get<int>();
    if (version != kFormatVersion) throw ArgumentError("unsupported model version " + std::to_string(version));
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw ArgumentError("unknown model kind");

    TreeModel::Parts parts;
    parts.kind = *kind;
    parts.params = params_from_json(*kind, j.at("hyperparameters"));
    parts.seed = j.at("seed").get<std::uint64_t>();
    parts.init_score = j.at("init_score").get<double>();
    parts.base_rate = j.at("base_rate").get<double>();
    parts.importances = j.at("importances").get<FeatureArray>();
    for (const json& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const json& n : t.at("nodes")) {
        nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                         n.at("right").get<int>(), n.at("value").get<double>()});
      }
      parts.trees.emplace_back(std::move(nodes));
      parts.tree_weights.push_back(t.at("weight").get<double>());
    }
    if (j.contains("split")) {
      parts.split = SplitSpec{j["split"].at("train_fraction").get<double>(), j["split"].at("seed").get<std::uint64_t>()};
    }
    if (parts.kind == ModelKind::kTree && parts.trees.size() != 1) throw ArgumentError("tree model needs one tree");
    if (parts.kind == ModelKind::kForest && parts.trees.empty()) throw ArgumentError("forest without trees");
    return TreeModel(std::move(parts));
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("malformed model JSON: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TreeModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << model_to_json(model) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

TreeModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return model_from_json(buf.str());
  } catch (const ArgumentError& e) {
    throw LoadError(path.string(), 0, e.what());
  }
}

}  // namespace poimatch
