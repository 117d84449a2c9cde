#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "poimatch/records.hpp"
#include "poimatch/trees.hpp"

namespace poimatch {

// Results-table naming: class1 is the unmatched class (label 0), class2 the
// matched class (label 1). Confusion counts treat class2 as positive.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the denominator was zero; the metric is then reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct MetricsReport {
  std::string dataset;
  std::optional<ModelKind> model;
  Confusion confusion;
  double accuracy = 0.0;
  ClassMetrics class1;
  ClassMetrics class2;
};

// Metrics from parallel truth/prediction label vectors. Throws ArgumentError
// when they are empty or differ in length.
MetricsReport metrics_from_labels(std::span<const int> truth, std::span<const int> predicted,
                                  std::string dataset = {});
MetricsReport metrics_from_confusion(const Confusion& c, std::string dataset = {});

// Throws ArgumentError on an empty test set.
MetricsReport evaluate(const TreeModel& model, std::span<const LabeledPair> test, std::string dataset = {});

struct BestMatch {
  std::string restaurant_id;
  std::string poi_id;
  double score = 0.0;
};

struct MatchRate {
  std::size_t restaurants = 0;
  std::size_t matched = 0;
  double rate = 0.0;
  // One entry per matched restaurant, ordered by restaurant id. The POI is
  // the highest-scoring predicted match (ties: smallest poi id).
  std::vector<BestMatch> best;
};

// A restaurant counts as matched iff at least one of its pairs is predicted
// 1. Every restaurant of the table is in the denominator. Throws
// ArgumentError for a pair whose restaurant is not in the table.
MatchRate match_rate(const TreeModel& model, std::span<const CandidatePair> pairs, const PlaceTable& restaurants);

// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::vector<ModelKind> models{kAllModelKinds.begin(), kAllModelKinds.end()};
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

// `regime` is the training set (a country, or kMERGED for the
// concatenation); `eval_set` is a country's test split or kMERGED for the
// concatenated test splits.
struct ExperimentCell {
  ModelKind model = ModelKind::kTree;
  Country regime = Country::kID;
  Country eval_set = Country::kID;
  MetricsReport report;
};

struct ExperimentReport {
  std::vector<Country> countries;
  std::vector<ExperimentCell> cells;

  const ExperimentCell* find(ModelKind model, Country regime, Country eval_set) const;
};

// Every country is split with the same split seed; models for all regimes
// share the model seed. Cells are ordered by (model, regime, eval_set) with
// countries in enum order and kMERGED last. Throws ArgumentError for fewer
// than two countries or a kMERGED key.
ExperimentReport cross_country_experiment(const std::map<Country, std::vector<LabeledPair>>& data,
                                          const ExperimentConfig& config);

struct PrecisionShift {
  ModelKind model;
  Country country;
  double own_regime = 0.0;
  double merged_regime = 0.0;
};
// Class2 precision on each country's own test split, own-country model vs
// merged model.
std::vector<PrecisionShift> precision_shifts(const ExperimentReport& report);

// ---------------------------------------------------------------------------
// Report output

// Header: model,regime,eval_set,dataset,n,tp,fp,tn,fn,accuracy,
// precision_class1,recall_class1,f1_class1,precision_class2,recall_class2,
// f1_class2,undefined. Reals are written with 9 significant digits.
void write_metrics_csv(std::ostream& out, std::span<const ExperimentCell> cells);
void write_metrics_csv(const std::filesystem::path& path, std::span<const ExperimentCell> cells);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
std::string format_summary(const MetricsReport& report);
std::string format_summary(const ExperimentReport& report);

struct Histogram {
  Feature feature = Feature::kGeoDistance;
  // bins + 1 edges; the last bin includes its upper edge.
  std::vector<double> edges;
  std::vector<std::size_t> class1;
  std::vector<std::size_t> class2;
};

// Name and street features use the range [0, 1]; the distance range is
// [0, max distance] (or [0, max_distance_m] when given). Values outside the
// range land in the nearest bin.
std::vector<Histogram> feature_histograms(std::span<const LabeledPair> data, std::size_t bins = 20,
                                          std::optional<double> max_distance_m = std::nullopt);
// Header: feature,bin_lo,bin_hi,count_class1,count_class2.
void write_histograms_csv(const std::filesystem::path& path, std::span<const Histogram> histograms);

}  // namespace poimatch
