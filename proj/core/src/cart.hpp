#pragma once

#include <span>
#include <vector>

#include "poimatch/random.hpp"
#include "poimatch/trees.hpp"

namespace poimatch::detail {

enum class Criterion { kGini, kSquaredError };

struct CartOptions {
  Criterion criterion = Criterion::kGini;
  int max_depth = 12;
  std::size_t min_leaf = 1;
  // Features examined per split; values >= kNumFeatures examine all of them.
  std::size_t max_features = kNumFeatures;
  // Required when max_features < kNumFeatures.
  Rng* rng = nullptr;
};

struct CartResult {
  DecisionTree tree;
  // Unnormalized weighted impurity decrease per feature.
  FeatureArray impurity_decrease{};
};

// Builds a CART tree over the rows listed in `rows` (indices into x/y/w; an
// index may repeat, e.g. for bootstrap resamples). For kGini, y holds 0/1
// labels; for kSquaredError it holds regression targets. Candidate
// thresholds sit midway between consecutive distinct feature values; equal
// gains keep the lower (feature, threshold).
CartResult build_cart(std::span<const FeatureArray> x, std::span<const double> y, std::span<const double> w,
                      std::vector<std::size_t> rows, const CartOptions& options);

// Importances normalized to sum 1, or uniform when all are zero.
FeatureArray normalize_importances(const FeatureArray& raw);

}  // namespace poimatch::detail
