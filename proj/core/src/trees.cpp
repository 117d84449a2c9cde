#include "poimatch/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "cart.hpp"
#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/random.hpp"

namespace poimatch {
namespace {

// ln(1e9): alpha assigned to a round whose learner makes no weighted error.
const double kPerfectAlpha = std::log(1e9);

struct Matrix {
  std::vector<FeatureArray> x;
  std::vector<double> y;
  std::vector<double> w;
  double base_rate = 0.0;
};

Matrix to_matrix(std::span<const LabeledPair> data, const std::array<double, 2>& class_weight) {
  Matrix m;
  m.x.reserve(data.size());
  m.y.reserve(data.size());
  m.w.reserve(data.size());
  double pos = 0.0, total = 0.0;
  for (const LabeledPair& lp : data) {
    if (lp.label != kUnmatched && lp.label != kMatched) throw ArgumentError("label must be 0 or 1");
    m.x.push_back(lp.pair.features.as_array());
    m.y.push_back(lp.label);
    const double w = class_weight[lp.label];
    m.w.push_back(w);
    total += w;
    pos += w * lp.label;
  }
  m.base_rate = total > 0.0 ? pos / total : 0.0;
  return m;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void check_class_weight(const std::array<double, 2>& cw) {
  if (!(cw[0] > 0.0 && cw[1] > 0.0 && std::isfinite(cw[0]) && std::isfinite(cw[1]))) {
    throw ConfigError("class_weight entries must be positive and finite");
  }
}

void require_rows(std::span<const LabeledPair> train) {
  if (train.empty()) throw ArgumentError("training set is empty");
}

int tree_label(const DecisionTree& tree, const FeatureArray& x) { return tree.value(x) >= 0.5 ? kMatched : kUnmatched; }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) - y*z
double logistic_loss(double y, double z) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - y * z;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kInitialManual: return "INITIAL_MANUAL";
    case Provenance::kBootstrapConfirmed: return "BOOTSTRAP_CONFIRMED";
    case Provenance::kBootstrapRectified: return "BOOTSTRAP_RECTIFIED";
  }
  return "?";
}

std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "INITIAL_MANUAL") return Provenance::kInitialManual;
  if (s == "BOOTSTRAP_CONFIRMED") return Provenance::kBootstrapConfirmed;
  if (s == "BOOTSTRAP_RECTIFIED") return Provenance::kBootstrapRectified;
  return std::nullopt;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTree: return "tree";
    case ModelKind::kForest: return "forest";
    case ModelKind::kAdaBoost: return "adaboost";
    case ModelKind::kGbm: return "gbm";
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view s) {
  const std::string lower = csv::to_lower_ascii(s);
  if (lower == "tree" || lower == "decisiontree") return ModelKind::kTree;
  if (lower == "forest" || lower == "randomforest") return ModelKind::kForest;
  if (lower == "adaboost") return ModelKind::kAdaBoost;
  if (lower == "gbm" || lower == "gradientboost") return ModelKind::kGbm;
  return std::nullopt;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split.train_fraction must be in (0, 1)");
}

TrainTestSplit split_train_test(std::span<const LabeledPair> data, const SplitSpec& spec) {
  spec.validate();
  if (data.size() < 5) throw ArgumentError("need at least 5 labeled rows to split, got " + std::to_string(data.size()));
  const std::size_t n = data.size();
  std::vector<std::size_t> order = all_rows(n);
  Rng rng(spec.seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);

  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction + 0.5));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  TrainTestSplit split;
  split.train.reserve(n_train);
  split.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? split.train : split.test).push_back(data[order[i]]);
  return split;
}

void validate(const TreeParams& p) {
  if (p.max_depth < 1) throw ConfigError("tree.max_depth must be >= 1");
  if (p.min_leaf < 1) throw ConfigError("tree.min_leaf must be >= 1");
  check_class_weight(p.class_weight);
}

void validate(const ForestParams& p) {
  if (p.n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");
  if (p.max_features < 1 || p.max_features > kNumFeatures) throw ConfigError("forest.max_features must be in [1, 4]");
  if (p.workers < 1) throw ConfigError("forest.workers must be >= 1");
  validate(p.tree);
}

void validate(const AdaBoostParams& p) {
  if (p.base_depth < 1) throw ConfigError("adaboost.base_depth must be >= 1");
  check_class_weight(p.class_weight);
}

void validate(const GbmParams& p) {
  if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0)) throw ConfigError("gbm.learning_rate must be in (0, 1]");
  if (p.max_depth < 1) throw ConfigError("gbm.max_depth must be >= 1");
  if (p.min_leaf < 1) throw ConfigError("gbm.min_leaf must be >= 1");
  if (!(p.l2 >= 0.0 && std::isfinite(p.l2))) throw ConfigError("gbm.l2 must be finite and >= 0");
  check_class_weight(p.class_weight);
}

std::size_t DecisionTree::leaf_index(const FeatureArray& x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
  return i;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int best = 0;
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[i].is_leaf()) {
      stack.emplace_back(nodes_[i].left, d + 1);
      stack.emplace_back(nodes_[i].right, d + 1);
    }
  }
  return best;
}

TreeModel::TreeModel(Parts parts) : parts_(std::move(parts)) {
  if (parts_.tree_weights.size() != parts_.trees.size()) throw ArgumentError("one weight per tree is required");
  for (const DecisionTree& t : parts_.trees) {
    const auto nodes = t.nodes();
    if (nodes.empty()) throw ArgumentError("tree without nodes");
    for (const TreeNode& n : nodes) {
      if (n.is_leaf()) continue;
      const auto size = static_cast<int>(nodes.size());
      if (n.feature >= static_cast<int>(kNumFeatures) || n.left <= 0 || n.right <= 0 || n.left >= size ||
          n.right >= size) {
        throw ArgumentError("malformed tree node");
      }
    }
  }
}

TreeModel train_decision_tree(std::span<const LabeledPair> train, const TreeParams& params) {
  validate(params);
  require_rows(train);
  const Matrix m = to_matrix(train, params.class_weight);
  detail::CartOptions opt;
  opt.max_depth = params.max_depth;
  opt.min_leaf = params.min_leaf;
  auto result = detail::build_cart(m.x, m.y, m.w, all_rows(m.x.size()), opt);

  TreeModel::Parts parts;
  parts.kind = ModelKind::kTree;
  parts.params = params;
  parts.trees.push_back(std::move(result.tree));
  parts.tree_weights = {1.0};
  parts.base_rate = m.base_rate;
  parts.importances = detail::normalize_importances(result.impurity_decrease);
  return TreeModel(std::move(parts));
}

TreeModel train_random_forest(std::span<const LabeledPair> train, const ForestParams& params) {
  validate(params);
  require_rows(train);
  const Matrix m = to_matrix(train, params.tree.class_weight);
  const std::size_t n = m.x.size();

  std::vector<DecisionTree> trees(params.n_trees);
  std::vector<FeatureArray> importances(params.n_trees);
  auto build_one = [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> rows;
    if (params.bootstrap) {
      rows.resize(n);
      for (auto& r : rows) r = rng.uniform_index(n);
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all_rows(n);
    }
    detail::CartOptions opt;
    opt.max_depth = params.tree.max_depth;
    opt.min_leaf = params.tree.min_leaf;
    opt.max_features = params.max_features;
    opt.rng = &rng;
    auto result = detail::build_cart(m.x, m.y, m.w, std::move(rows), opt);
    trees[t] = std::move(result.tree);
    importances[t] = detail::normalize_importances(result.impurity_decrease);
  };

  const unsigned workers = std::min<unsigned>(params.workers, static_cast<unsigned>(params.n_trees));
  if (workers <= 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) build_one(t);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < params.n_trees; t += workers) build_one(t);
      });
    }
  }

  FeatureArray total{};
  for (const auto& imp : importances) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) total[f] += imp[f];
  }

  TreeModel::Parts parts;
  parts.kind = ModelKind::kForest;
  parts.params = params;
  parts.seed = params.seed;
  parts.trees = std::move(trees);
  parts.tree_weights.assign(params.n_trees, 1.0);
  parts.base_rate = m.base_rate;
  parts.importances = detail::normalize_importances(total);
  return TreeModel(std::move(parts));
}

TreeModel train_adaboost(std::span<const LabeledPair> train, const AdaBoostParams& params, TrainingTrace* trace) {
  validate(params);
  require_rows(train);
  const Matrix m = to_matrix(train, params.class_weight);
  const std::size_t n = m.x.size();

  std::vector<double> weights = m.w;
  const double initial_total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= initial_total;

  TreeModel::Parts parts;
  parts.kind = ModelKind::kAdaBoost;
  parts.params = params;
  parts.seed = params.seed;
  parts.base_rate = m.base_rate;
  FeatureArray weighted_importance{};

  detail::CartOptions opt;
  opt.max_depth = params.base_depth;
  std::vector<int> h(n);
  for (std::size_t round = 0; round < params.n_rounds; ++round) {
    auto result = detail::build_cart(m.x, m.y, weights, all_rows(n), opt);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = tree_label(result.tree, m.x[i]);
      if (h[i] != static_cast<int>(m.y[i])) err += weights[i];
    }
    if (err >= 0.5) {
      if (trace) trace->stop_error = err;
      break;
    }
    const bool perfect = err <= 0.0;
    const double alpha = perfect ? kPerfectAlpha : 0.5 * std::log((1.0 - err) / err);
    if (trace) {
      trace->round_error.push_back(err);
      trace->round_alpha.push_back(alpha);
    }
    const FeatureArray imp = detail::normalize_importances(result.impurity_decrease);
    for (std::size_t f = 0; f < kNumFeatures; ++f) weighted_importance[f] += alpha * imp[f];
    parts.trees.push_back(std::move(result.tree));
    parts.tree_weights.push_back(alpha);
    if (perfect) break;

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] *= std::exp(h[i] != static_cast<int>(m.y[i]) ? alpha : -alpha);
      total += weights[i];
    }
    for (double& w : weights) w /= total;
  }
  parts.importances = detail::normalize_importances(weighted_importance);
  return TreeModel(std::move(parts));
}

TreeModel train_gradient_boost(std::span<const LabeledPair> train, const GbmParams& params, TrainingTrace* trace) {
  validate(params);
  require_rows(train);
  const Matrix m = to_matrix(train, params.class_weight);
  const std::size_t n = m.x.size();
  const double total_weight = std::accumulate(m.w.begin(), m.w.end(), 0.0);

  TreeModel::Parts parts;
  parts.kind = ModelKind::kGbm;
  parts.params = params;
  parts.seed = params.seed;
  parts.base_rate = m.base_rate;

  const bool single_class = m.base_rate <= 0.0 || m.base_rate >= 1.0;
  parts.init_score = single_class ? 0.0 : std::log(m.base_rate / (1.0 - m.base_rate));

  std::vector<double> score(n, parts.init_score);
  auto mean_loss = [&] {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += m.w[i] * logistic_loss(m.y[i], score[i]);
    return loss / total_weight;
  };
  if (trace && !single_class) trace->log_loss.push_back(mean_loss());

  FeatureArray total_importance{};
  std::vector<double> residual(n), hessian(n);
  detail::CartOptions opt;
  opt.criterion = detail::Criterion::kSquaredError;
  opt.max_depth = params.max_depth;
  opt.min_leaf = params.min_leaf;
  for (std::size_t stage = 0; !single_class && stage < params.n_trees; ++stage) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      residual[i] = m.y[i] - p;
      hessian[i] = p * (1.0 - p);
    }
    auto result = detail::build_cart(m.x, residual, m.w, all_rows(n), opt);
    std::vector<TreeNode> nodes(result.tree.nodes().begin(), result.tree.nodes().end());

    std::vector<std::vector<std::size_t>> members(nodes.size());
    std::vector<std::size_t> leaf_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of[i] = result.tree.leaf_index(m.x[i]);
      members[leaf_of[i]].push_back(i);
    }
    for (std::size_t leaf = 0; leaf < nodes.size(); ++leaf) {
      if (!nodes[leaf].is_leaf()) continue;
      double g = 0.0, hsum = params.l2;
      for (std::size_t i : members[leaf]) {
        g += m.w[i] * residual[i];
        hsum += m.w[i] * hessian[i];
      }
      double step = hsum > 1e-12 ? params.learning_rate * g / hsum : 0.0;
      // Damped Newton step, halved until it does not raise this leaf's loss.
      auto leaf_loss = [&](double s) {
        double loss = 0.0;
        for (std::size_t i : members[leaf]) loss += m.w[i] * logistic_loss(m.y[i], score[i] + s);
        return loss;
      };
      const double before = leaf_loss(0.0);
      int halvings = 0;
      while (step != 0.0 && leaf_loss(step) > before) {
        step = ++halvings < 60 ? step / 2 : 0.0;
      }
      nodes[leaf].value = step;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] += nodes[leaf_of[i]].value;
    if (trace) trace->log_loss.push_back(mean_loss());

    const FeatureArray imp = detail::normalize_importances(result.impurity_decrease);
    for (std::size_t f = 0; f < kNumFeatures; ++f) total_importance[f] += imp[f];
    parts.trees.emplace_back(std::move(nodes));
    parts.tree_weights.push_back(1.0);
  }
  parts.importances = detail::normalize_importances(total_importance);
  return TreeModel(std::move(parts));
}

TreeModel train_model(std::span<const LabeledPair> train, const ModelParams& params) {
  return std::visit(
      [&](const auto& p) -> TreeModel {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TreeParams>) return train_decision_tree(train, p);
        if constexpr (std::is_same_v<P, ForestParams>) return train_random_forest(train, p);
        if constexpr (std::is_same_v<P, AdaBoostParams>) return train_adaboost(train, p);
        if constexpr (std::is_same_v<P, GbmParams>) return train_gradient_boost(train, p);
      },
      params);
}

ModelParams default_params(ModelKind kind, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::kTree: return TreeParams{};
    case ModelKind::kForest: {
      ForestParams p;
      p.seed = seed;
      return p;
    }
    case ModelKind::kAdaBoost: {
      AdaBoostParams p;
      p.seed = seed;
      return p;
    }
    case ModelKind::kGbm: {
      GbmParams p;
      p.seed = seed;
      return p;
    }
  }
  return TreeParams{};
}

Prediction predict(const TreeModel& model, const FeatureArray& x) {
  const auto trees = model.trees();
  const auto weights = model.tree_weights();
  double score = model.base_rate();
  switch (model.kind()) {
    case ModelKind::kTree:
      score = trees.front().value(x);
      break;
    case ModelKind::kForest: {
      std::size_t votes = 0;
      for (const auto& t : trees) votes += static_cast<std::size_t>(tree_label(t, x));
      score = static_cast<double>(votes) / static_cast<double>(trees.size());
      break;
    }
    case ModelKind::kAdaBoost: {
      double total = 0.0, positive = 0.0;
      for (std::size_t i = 0; i < trees.size(); ++i) {
        total += weights[i];
        if (tree_label(trees[i], x) == kMatched) positive += weights[i];
      }
      if (total > 0.0) score = positive / total;
      break;
    }
    case ModelKind::kGbm: {
      if (trees.empty()) break;
      double z = model.init_score();
      for (std::size_t i = 0; i < trees.size(); ++i) z += weights[i] * trees[i].value(x);
      score = sigmoid(z);
      break;
    }
  }
  return {score >= 0.5 ? kMatched : kUnmatched, score};
}

FeatureArray feature_importances(const TreeModel& model) { return model.importances(); }

}  // namespace poimatch
