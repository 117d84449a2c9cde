#include "poimatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"

namespace poimatch {
namespace {

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t hit, std::size_t predicted, std::size_t actual) {
  ClassMetrics m;
  m.precision = ratio(hit, predicted, m.precision_undefined);
  m.recall = ratio(hit, actual, m.recall_undefined);
  // 2PR/(P+R) reduces to 2hit/(predicted+actual) whenever both are defined.
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

std::vector<int> labels_of(std::span<const LabeledPair> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const LabeledPair& lp : rows) out.push_back(lp.label);
  return out;
}

std::string undefined_flags(const MetricsReport& r) {
  std::vector<std::string> flags;
  if (r.class1.precision_undefined) flags.emplace_back("precision_class1");
  if (r.class1.recall_undefined) flags.emplace_back("recall_class1");
  if (r.class2.precision_undefined) flags.emplace_back("precision_class2");
  if (r.class2.recall_undefined) flags.emplace_back("recall_class2");
  std::string out;
  for (const std::string& f : flags) {
    if (!out.empty()) out += ';';
    out += f;
  }
  return out;
}

void summary_line(std::ostringstream& os, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "n=%zu acc=%.3f | class1 P=%.3f R=%.3f F1=%.3f | class2 P=%.3f R=%.3f F1=%.3f",
                r.confusion.total(), r.accuracy, r.class1.precision, r.class1.recall, r.class1.f1,
                r.class2.precision, r.class2.recall, r.class2.f1);
  os << buf;
  const std::string flags = undefined_flags(r);
  if (!flags.empty()) os << " (undefined: " << flags << ")";
}

}  // namespace

MetricsReport metrics_from_confusion(const Confusion& c, std::string dataset) {
  if (c.total() == 0) throw ArgumentError("cannot compute metrics on an empty set");
  MetricsReport r;
  r.dataset = std::move(dataset);
  r.confusion = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.class1 = class_metrics(c.tn, c.tn + c.fn, c.tn + c.fp);
  r.class2 = class_metrics(c.tp, c.tp + c.fp, c.tp + c.fn);
  return r;
}

MetricsReport metrics_from_labels(std::span<const int> truth, std::span<const int> predicted, std::string dataset) {
  if (truth.size() != predicted.size()) throw ArgumentError("truth and prediction lengths differ");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == kMatched;
    const bool p = predicted[i] == kMatched;
    if (t && p) ++c.tp;
    else if (!t && p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c, std::move(dataset));
}

MetricsReport evaluate(const TreeModel& model, std::span<const LabeledPair> test, std::string dataset) {
  if (test.empty()) throw ArgumentError("evaluate needs a non-empty test set");
  std::vector<int> predicted;
  predicted.reserve(test.size());
  for (const LabeledPair& lp : test) predicted.push_back(predict(model, lp.pair.features).label);
  const std::vector<int> truth = labels_of(test);
  MetricsReport r = metrics_from_labels(truth, predicted, std::move(dataset));
  r.model = model.kind();
  return r;
}

MatchRate match_rate(const TreeModel& model, std::span<const CandidatePair> pairs, const PlaceTable& restaurants) {
  std::vector<std::optional<BestMatch>> best(restaurants.size());
  for (const CandidatePair& p : pairs) {
    const auto idx = restaurants.find(p.restaurant_id);
    if (!idx) throw ArgumentError("pair references unknown restaurant '" + p.restaurant_id + "'");
    const Prediction pred = predict(model, p.features);
    if (pred.label != kMatched) continue;
    auto& slot = best[*idx];
    if (!slot || pred.score > slot->score || (pred.score == slot->score && p.poi_id < slot->poi_id)) {
      slot = BestMatch{p.restaurant_id, p.poi_id, pred.score};
    }
  }
  MatchRate out;
  out.restaurants = restaurants.size();
  for (auto& slot : best) {
    if (slot) out.best.push_back(std::move(*slot));
  }
  std::sort(out.best.begin(), out.best.end(),
            [](const BestMatch& a, const BestMatch& b) { return a.restaurant_id < b.restaurant_id; });
  out.matched = out.best.size();
  out.rate = out.restaurants == 0 ? 0.0 : static_cast<double>(out.matched) / static_cast<double>(out.restaurants);
  return out;
}

// ---------------------------------------------------------------------------

const ExperimentCell* ExperimentReport::find(ModelKind model, Country regime, Country eval_set) const {
  for (const ExperimentCell& c : cells) {
    if (c.model == model && c.regime == regime && c.eval_set == eval_set) return &c;
  }
  return nullptr;
}

ExperimentReport cross_country_experiment(const std::map<Country, std::vector<LabeledPair>>& data,
                                          const ExperimentConfig& config) {
  if (data.size() < 2) throw ArgumentError("the cross-country experiment needs at least two countries");
  if (data.contains(Country::kMERGED)) throw ArgumentError("MERGED is not a country dataset");
  if (config.models.empty()) throw ArgumentError("no model kinds requested");
  SplitSpec split{config.train_fraction, config.seed};
  split.validate();

  // std::map iterates in enum order, which fixes the concatenation order.
  ExperimentReport report;
  std::vector<std::string> tags;
  std::vector<std::vector<LabeledPair>> train_sets;
  std::vector<std::vector<LabeledPair>> test_sets;
  std::vector<Country> regimes;
  std::vector<LabeledPair> merged_train;
  std::vector<LabeledPair> merged_test;
  for (const auto& [country, rows] : data) {
    TrainTestSplit s = split_train_test(rows, split);
    merged_train.insert(merged_train.end(), s.train.begin(), s.train.end());
    merged_test.insert(merged_test.end(), s.test.begin(), s.test.end());
    report.countries.push_back(country);
    regimes.push_back(country);
    train_sets.push_back(std::move(s.train));
    test_sets.push_back(std::move(s.test));
  }
  regimes.push_back(Country::kMERGED);
  train_sets.push_back(std::move(merged_train));
  test_sets.push_back(std::move(merged_test));

  struct Job {
    ModelKind model;
    std::size_t regime;
  };
  std::vector<Job> jobs;
  for (ModelKind m : config.models) {
    for (std::size_t r = 0; r < regimes.size(); ++r) jobs.push_back({m, r});
  }

  std::vector<std::vector<MetricsReport>> results(jobs.size());
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const TreeModel model = train_model(train_sets[job.regime], default_params(job.model, config.seed));
    std::vector<MetricsReport> row;
    for (std::size_t e = 0; e < regimes.size(); ++e) {
      row.push_back(evaluate(model, test_sets[e], std::string(to_string(regimes[e]))));
    }
    results[j] = std::move(row);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::vector<std::future<void>> futures;
    for (unsigned w = 0; w < workers; ++w) {
      futures.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t j = w; j < jobs.size(); j += workers) run_job(j);
      }));
    }
    for (auto& f : futures) f.get();
  }

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (std::size_t e = 0; e < regimes.size(); ++e) {
      report.cells.push_back({jobs[j].model, regimes[jobs[j].regime], regimes[e], std::move(results[j][e])});
    }
  }
  return report;
}

std::vector<PrecisionShift> precision_shifts(const ExperimentReport& report) {
  std::vector<PrecisionShift> out;
  std::vector<ModelKind> models;
  for (const ExperimentCell& c : report.cells) {
    if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
  }
  for (ModelKind m : models) {
    for (Country c : report.countries) {
      const ExperimentCell* own = report.find(m, c, c);
      const ExperimentCell* merged = report.find(m, Country::kMERGED, c);
      if (!own || !merged) continue;
      out.push_back({m, c, own->report.class2.precision, merged->report.class2.precision});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kMetricsHeader{
    "model",           "regime",        "eval_set",         "dataset",       "n",
    "tp",              "fp",            "tn",               "fn",            "accuracy",
    "precision_class1", "recall_class1", "f1_class1",        "precision_class2", "recall_class2",
    "f1_class2",       "undefined"};

void write_metrics_row(std::ostream& out, const std::string& model, const std::string& regime,
                       const std::string& eval_set, const MetricsReport& r) {
  const Confusion& c = r.confusion;
  csv::write_row(out, {model, regime, eval_set, r.dataset, std::to_string(c.total()), std::to_string(c.tp),
                       std::to_string(c.fp), std::to_string(c.tn), std::to_string(c.fn), csv::format_sig9(r.accuracy),
                       csv::format_sig9(r.class1.precision), csv::format_sig9(r.class1.recall),
                       csv::format_sig9(r.class1.f1), csv::format_sig9(r.class2.precision),
                       csv::format_sig9(r.class2.recall), csv::format_sig9(r.class2.f1), undefined_flags(r)});
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const ExperimentCell> cells) {
  csv::write_row(out, kMetricsHeader);
  for (const ExperimentCell& c : cells) {
    write_metrics_row(out, std::string(to_string(c.model)), std::string(to_string(c.regime)),
                      std::string(to_string(c.eval_set)), c.report);
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const ExperimentCell> cells) {
  std::ofstream out = open_out(path);
  write_metrics_csv(out, cells);
  if (!out) throw IoError(path.string(), "write failed");
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out = open_out(path);
  csv::write_row(out, kMetricsHeader);
  write_metrics_row(out, report.model ? std::string(to_string(*report.model)) : std::string(), "", "", report);
  if (!out) throw IoError(path.string(), "write failed");
}

std::string format_summary(const MetricsReport& report) {
  std::ostringstream os;
  if (report.model) os << to_string(*report.model) << ' ';
  if (!report.dataset.empty()) os << '[' << report.dataset << "] ";
  summary_line(os, report);
  const Confusion& c = report.confusion;
  os << "\n  confusion: tp=" << c.tp << " fp=" << c.fp << " tn=" << c.tn << " fn=" << c.fn << '\n';
  return os.str();
}

std::string format_summary(const ExperimentReport& report) {
  std::ostringstream os;
  for (const ExperimentCell& c : report.cells) {
    os << to_string(c.model) << " trained on " << to_string(c.regime) << ", tested on " << to_string(c.eval_set)
       << ": ";
    summary_line(os, c.report);
    os << '\n';
  }
  const auto shifts = precision_shifts(report);
  if (!shifts.empty()) os << "\nclass2 precision, own-country vs merged training:\n";
  for (const PrecisionShift& s : shifts) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-8s %-3s own=%.4f merged=%.4f%s\n", std::string(to_string(s.model)).c_str(),
                  std::string(to_string(s.country)).c_str(), s.own_regime, s.merged_regime,
                  s.merged_regime < s.own_regime ? "  (degraded)" : "");
    os << buf;
  }
  return os.str();
}

std::vector<Histogram> feature_histograms(std::span<const LabeledPair> data, std::size_t bins,
                                          std::optional<double> max_distance_m) {
  if (bins == 0) throw ArgumentError("histogram needs at least one bin");
  std::vector<Histogram> out;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double hi = 1.0;
    if (f == static_cast<std::size_t>(Feature::kGeoDistance)) {
      if (max_distance_m) {
        hi = *max_distance_m;
      } else {
        hi = 0.0;
        for (const LabeledPair& lp : data) hi = std::max(hi, lp.pair.features.geo_distance_m);
      }
      if (!(hi > 0.0)) hi = 1.0;
    }
    Histogram h;
    h.feature = static_cast<Feature>(f);
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
    h.class1.assign(bins, 0);
    h.class2.assign(bins, 0);
    for (const LabeledPair& lp : data) {
      const double v = lp.pair.features.as_array()[f];
      auto b = static_cast<long long>(std::floor(v / hi * static_cast<double>(bins)));
      b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
      (lp.label == kMatched ? h.class2 : h.class1)[static_cast<std::size_t>(b)]++;
    }
    out.push_back(std::move(h));
  }
  return out;
}

void write_histograms_csv(const std::filesystem::path& path, std::span<const Histogram> histograms) {
  std::ofstream out = open_out(path);
  csv::write_row(out, {"feature", "bin_lo", "bin_hi", "count_class1", "count_class2"});
  for (const Histogram& h : histograms) {
    for (std::size_t b = 0; b < h.class1.size(); ++b) {
      csv::write_row(out, {kFeatureNames[static_cast<std::size_t>(h.feature)], csv::format_sig9(h.edges[b]),
                           csv::format_sig9(h.edges[b + 1]), std::to_string(h.class1[b]),
                           std::to_string(h.class2[b])});
    }
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace poimatch
