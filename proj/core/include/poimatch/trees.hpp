#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "poimatch/blocking.hpp"

namespace poimatch {

enum class Provenance { kInitialManual, kBootstrapConfirmed, kBootstrapRectified };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

// Stored label codes: 0 = unmatched, 1 = matched.
inline constexpr int kUnmatched = 0;
inline constexpr int kMatched = 1;

struct LabeledPair {
  CandidatePair pair;
  int label = kUnmatched;
  Provenance provenance = Provenance::kInitialManual;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainTestSplit {
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> test;
};

// Seeded shuffle, then round(n * fraction) rows (clamped to [1, n-1]) go to
// train. Throws ArgumentError for fewer than 5 rows.
TrainTestSplit split_train_test(std::span<const LabeledPair> data, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Models

enum class ModelKind { kTree, kForest, kAdaBoost, kGbm };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view s);
inline constexpr std::array<ModelKind, 4> kAllModelKinds{ModelKind::kTree, ModelKind::kForest, ModelKind::kAdaBoost,
                                                         ModelKind::kGbm};

struct TreeParams {
  int max_depth = 12;
  std::size_t min_leaf = 1;
  // Multiplies the weight of every row of class 0 / class 1.
  std::array<double, 2> class_weight{1.0, 1.0};
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_features = 2;
  bool bootstrap = true;
  TreeParams tree;
  std::uint64_t seed = 0;
  // Trees are built on this many threads; the result does not depend on it.
  unsigned workers = 1;
};

struct AdaBoostParams {
  std::size_t n_rounds = 100;
  int base_depth = 1;
  std::array<double, 2> class_weight{1.0, 1.0};
  std::uint64_t seed = 0;
};

struct GbmParams {
  std::size_t n_trees = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  std::size_t min_leaf = 1;
  // L2 shrinkage on leaf weights; 0 gives plain gradient boosting.
  double l2 = 0.0;
  std::array<double, 2> class_weight{1.0, 1.0};
  std::uint64_t seed = 0;
};

using ModelParams = std::variant<TreeParams, ForestParams, AdaBoostParams, GbmParams>;

void validate(const TreeParams& p);
void validate(const ForestParams& p);
void validate(const AdaBoostParams& p);
void validate(const GbmParams& p);

// Split `x[feature] <= threshold` goes left. A leaf has feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Classification trees: weighted fraction of class 1 among the node's rows.
  // Boosted regression trees: the additive score contribution.
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  std::span<const TreeNode> nodes() const { return nodes_; }
  std::size_t leaf_index(const FeatureArray& x) const;
  double value(const FeatureArray& x) const { return nodes_[leaf_index(x)].value; }
  int depth() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct Prediction {
  int label = kUnmatched;
  double score = 0.0;
};

class TreeModel {
 public:
  struct Parts {
    ModelKind kind = ModelKind::kTree;
    ModelParams params;
    std::uint64_t seed = 0;
    std::vector<DecisionTree> trees;
    // AdaBoost: round weights alpha. Other kinds: 1 per tree.
    std::vector<double> tree_weights;
    // GBM: initial log-odds.
    double init_score = 0.0;
    // Weighted fraction of class 1 in the training data.
    double base_rate = 0.0;
    FeatureArray importances{0.25, 0.25, 0.25, 0.25};
    // Train/test split that produced the training rows, when known.
    std::optional<SplitSpec> split;
  };

  explicit TreeModel(Parts parts);

  ModelKind kind() const { return parts_.kind; }
  const ModelParams& params() const { return parts_.params; }
  std::uint64_t seed() const { return parts_.seed; }
  std::span<const DecisionTree> trees() const { return parts_.trees; }
  std::span<const double> tree_weights() const { return parts_.tree_weights; }
  double init_score() const { return parts_.init_score; }
  double base_rate() const { return parts_.base_rate; }
  const FeatureArray& importances() const { return parts_.importances; }
  const std::optional<SplitSpec>& split() const { return parts_.split; }
  const Parts& parts() const { return parts_; }

 private:
  Parts parts_;
};

// Per-round diagnostics recorded during boosting.
struct TrainingTrace {
  // AdaBoost: weighted error and alpha of every accepted round, plus the
  // error of the round that stopped boosting (if any) in `stop_error`.
  std::vector<double> round_error;
  std::vector<double> round_alpha;
  std::optional<double> stop_error;
  // GBM: weighted mean training log-loss after 0, 1, ... stages.
  std::vector<double> log_loss;
};

TreeModel train_decision_tree(std::span<const LabeledPair> train, const TreeParams& params = {});
TreeModel train_random_forest(std::span<const LabeledPair> train, const ForestParams& params = {});
TreeModel train_adaboost(std::span<const LabeledPair> train, const AdaBoostParams& params = {},
                         TrainingTrace* trace = nullptr);
TreeModel train_gradient_boost(std::span<const LabeledPair> train, const GbmParams& params = {},
                               TrainingTrace* trace = nullptr);

// Dispatches on the active alternative of `params`.
TreeModel train_model(std::span<const LabeledPair> train, const ModelParams& params);
// Default parameters for `kind` with the given seed.
ModelParams default_params(ModelKind kind, std::uint64_t seed);

Prediction predict(const TreeModel& model, const FeatureArray& x);
inline Prediction predict(const TreeModel& model, const FeatureVector& f) { return predict(model, f.as_array()); }

// Normalized impurity decrease per feature; sums to 1. A model without any
// split reports uniform importances.
FeatureArray feature_importances(const TreeModel& model);

// Versioned JSON model file.
std::string model_to_json(const TreeModel& model);
TreeModel model_from_json(std::string_view json);
void save_model(const std::filesystem::path& path, const TreeModel& model);
TreeModel load_model(const std::filesystem::path& path);

}  // namespace poimatch
