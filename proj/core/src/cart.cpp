#include "cart.hpp"

#include <algorithm>
#include <numeric>

namespace poimatch::detail {
namespace {

constexpr double kMinGain = 1e-12;

struct NodeStats {
  double weight = 0.0;
  double weight_pos = 0.0;  // gini: weight of class 1; squared error: sum w*y
  double weight_sq = 0.0;   // squared error: sum w*y^2
};

// Weighted impurity times node weight: W * impurity.
double weighted_impurity(const NodeStats& s, Criterion c) {
  if (s.weight <= 0.0) return 0.0;
  if (c == Criterion::kGini) {
    const double neg = s.weight - s.weight_pos;
    return s.weight - (s.weight_pos * s.weight_pos + neg * neg) / s.weight;
  }
  return std::max(0.0, s.weight_sq - s.weight_pos * s.weight_pos / s.weight);
}

class Builder {
 public:
  Builder(std::span<const FeatureArray> x, std::span<const double> y, std::span<const double> w,
          const CartOptions& options)
      : x_(x), y_(y), w_(w), options_(options) {}

  CartResult run(std::vector<std::size_t> rows) {
    build(std::move(rows), 0);
    return {DecisionTree(std::move(nodes_)), importance_};
  }

 private:
  NodeStats stats(const std::vector<std::size_t>& rows) const {
    NodeStats s;
    for (std::size_t r : rows) add(s, r);
    return s;
  }

  void add(NodeStats& s, std::size_t r) const {
    s.weight += w_[r];
    s.weight_pos += w_[r] * y_[r];
    if (options_.criterion == Criterion::kSquaredError) s.weight_sq += w_[r] * y_[r] * y_[r];
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> features(kNumFeatures);
    std::iota(features.begin(), features.end(), std::size_t{0});
    if (options_.max_features >= kNumFeatures || options_.rng == nullptr) return features;
    const std::size_t k = std::max<std::size_t>(1, options_.max_features);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + options_.rng->uniform_index(kNumFeatures - i);
      std::swap(features[i], features[j]);
    }
    features.resize(k);
    std::sort(features.begin(), features.end());
    return features;
  }

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const NodeStats parent = stats(rows);
    nodes_[id].value = parent.weight > 0.0 ? parent.weight_pos / parent.weight : 0.0;

    const double parent_imp = weighted_impurity(parent, options_.criterion);
    if (depth >= options_.max_depth || rows.size() < 2 * options_.min_leaf || parent_imp <= kMinGain) {
      return id;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = kMinGain;
    std::vector<std::size_t> order = rows;
    for (std::size_t f : candidate_features()) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
      NodeStats left;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        add(left, order[i]);
        const double lo = x_[order[i]][f];
        const double hi = x_[order[i + 1]][f];
        if (!(lo < hi)) continue;
        const std::size_t n_left = i + 1;
        if (n_left < options_.min_leaf || order.size() - n_left < options_.min_leaf) continue;
        NodeStats right{parent.weight - left.weight, parent.weight_pos - left.weight_pos,
                        parent.weight_sq - left.weight_sq};
        const double gain = parent_imp - weighted_impurity(left, options_.criterion) -
                            weighted_impurity(right, options_.criterion);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double mid = lo + (hi - lo) / 2;
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (x_[r][best_feature] <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    importance_[best_feature] += best_gain;
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    const int left = build(std::move(left_rows), depth + 1);
    nodes_[id].left = left;
    const int right = build(std::move(right_rows), depth + 1);
    nodes_[id].right = right;
    return id;
  }

  std::span<const FeatureArray> x_;
  std::span<const double> y_;
  std::span<const double> w_;
  CartOptions options_;
  std::vector<TreeNode> nodes_;
  FeatureArray importance_{};
};

}  // namespace

CartResult build_cart(std::span<const FeatureArray> x, std::span<const double> y, std::span<const double> w,
                      std::vector<std::size_t> rows, const CartOptions& options) {
  return Builder(x, y, w, options).run(std::move(rows));
}

FeatureArray normalize_importances(const FeatureArray& raw) {
  double total = 0.0;
  for (double v : raw) total += v;
  if (!(total > 0.0)) return {0.25, 0.25, 0.25, 0.25};
  FeatureArray out{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = raw[i] / total;
  return out;
}

}  // namespace poimatch::detail
