// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any of them fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "poimatch/blocking.hpp"
#include "poimatch/bootstrap.hpp"
#include "poimatch/eval.hpp"
#include "poimatch/geo.hpp"
#include "poimatch/random.hpp"
#include "poimatch/synthgen.hpp"
#include "poimatch/text.hpp"
#include "poimatch/trees.hpp"
#include "poimatch_cli/commands.hpp"

namespace fs = std::filesystem;
using namespace poimatch;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (ok) detail = what;
    ok = false;
  }
};

int g_failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char timing[96];
  std::snprintf(timing, sizeof(timing), "%.2fs (limit %.0fs)", secs, limit_s);
  c.expect(secs < limit_s, std::string("too slow: ") + timing);
  if (!c.ok) ++g_failures;
  std::printf("%s %s %s%s%s\n", c.ok ? "PASS" : "FAIL", name.c_str(), timing, c.ok ? "" : " : ",
              c.ok ? "" : c.detail.c_str());
  std::fflush(stdout);
}

// Fractions compare by cross multiplication so that unreduced forms agree.
bool same(text::Fraction f, std::int64_t num, std::int64_t den) { return f.num * den == num * f.den; }

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("poimatch-acc-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int truth_of(const synth::TruthSet& truth, const CandidatePair& p) {
  return truth.contains({p.restaurant_id, p.poi_id}) ? kMatched : kUnmatched;
}

std::vector<CandidatePair> candidate_pool(const synth::Dataset& d, const BlockingConfig& cfg) {
  auto pairs = block_pairs(d.restaurants, d.pois, cfg);
  featurize_all(pairs, d.restaurants, d.pois, cfg);
  return downsample(std::move(pairs), cfg);
}

std::vector<LabeledPair> labeled_dataset(const synth::GenConfig& gen, std::uint64_t seed) {
  const synth::Dataset d = synth::generate(gen);
  AnnotationState state(candidate_pool(d, {}));
  ProtocolPlan plan;
  plan.seed = seed;
  run_bootstrap_protocol(state, [&](const CandidatePair& p) { return truth_of(d.truth, p); }, plan);
  return state.labeled_pairs();
}

// ---------------------------------------------------------------------------

void string_exemplars(Check& c) {
  using text::levenshtein_norm_exact;
  using text::jaro_distance_exact;
  c.expect(text::levenshtein_raw("a", "b") == 1, "lev_raw(a,b)");
  c.expect(text::levenshtein_raw("abczzzzzzzzzzzzzzzz", "fghzzzzzzzzzzzzzzzz") == 3, "lev_raw(abcz..,fghz..)");
  c.expect(same(levenshtein_norm_exact("ab", "ba"), 1, 2), "lev_norm(ab,ba)");
  c.expect(same(levenshtein_norm_exact("ab", "abcd"), 1, 3), "lev_norm(ab,abcd)");
  c.expect(same(levenshtein_norm_exact("abc", "def"), 1, 2), "lev_norm(abc,def)");
  c.expect(same(jaro_distance_exact("ab", "ba"), 1, 1), "jaro_distance(ab,ba)");
  c.expect(same(jaro_distance_exact("ab", "abcd"), 1, 6), "jaro_distance(ab,abcd)");
}

// Plain recursive definition, memoized on (i, j) for one pair of strings.
std::size_t brute_lev(const std::string& a, const std::string& b, std::size_t i, std::size_t j,
                      std::vector<int>& memo) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  int& slot = memo[i * (b.size() + 1) + j];
  if (slot >= 0) return static_cast<std::size_t>(slot);
  std::size_t d;
  if (a[i] == b[j]) {
    d = brute_lev(a, b, i + 1, j + 1, memo);
  } else {
    d = 1 + std::min({brute_lev(a, b, i + 1, j, memo), brute_lev(a, b, i, j + 1, memo),
                      brute_lev(a, b, i + 1, j + 1, memo)});
  }
  slot = static_cast<int>(d);
  return d;
}

void levenshtein_oracle(Check& c) {
  std::vector<std::string> words{""};
  for (std::size_t begin = 0, len = 1; len <= 6; ++len) {
    const std::size_t end = words.size();
    for (std::size_t i = begin; i < end; ++i) {
      for (char ch : {'a', 'b', 'c'}) words.push_back(words[i] + ch);
    }
    begin = end;
  }
  c.expect(words.size() == 1093, "word count " + std::to_string(words.size()));
  std::size_t mismatches = 0;
  std::vector<int> memo;
  for (const std::string& a : words) {
    for (const std::string& b : words) {
      memo.assign((a.size() + 1) * (b.size() + 1), -1);
      const std::size_t expected = brute_lev(a, b, 0, 0, memo);
      if (text::levenshtein_raw(a, b) != expected) {
        if (mismatches++ == 0) c.expect(false, "lev_raw(" + a + "," + b + ")");
      }
      const text::Fraction f = text::levenshtein_norm_exact(a, b);
      const bool norm_ok = a.empty() && b.empty() ? f.num == 0
                                                  : same(f, static_cast<std::int64_t>(expected),
                                                         static_cast<std::int64_t>(a.size() + b.size()));
      if (!norm_ok && mismatches++ == 0) c.expect(false, "lev_norm(" + a + "," + b + ")");
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " mismatches");
}

void geohash_roundtrip(Check& c) {
  Rng rng(20240601);
  for (int i = 0; i < 10000; ++i) {
    const geo::GeoPoint p{rng.uniform(-90.0, 90.0), rng.uniform(-180.0, 180.0)};
    for (int precision = 1; precision <= 12; ++precision) {
      const std::string code = geo::geohash_encode(p, precision);
      const geo::GeohashCell cell = geo::geohash_decode_bounds(code);
      if (code.size() != static_cast<std::size_t>(precision) || !cell.contains(p)) {
        c.expect(false, "point " + std::to_string(p.lat) + "," + std::to_string(p.lon) + " p" +
                            std::to_string(precision));
        return;
      }
    }
  }
  const geo::GeohashCell eq = geo::geohash_decode_bounds(geo::geohash_encode({0.001, 0.001}, 6));
  const double mid_lat = (eq.lat_min + eq.lat_max) / 2;
  const double width = geo::haversine_m({mid_lat, eq.lon_min}, {mid_lat, eq.lon_max});
  const double height = geo::haversine_m({eq.lat_min, eq.lon_min}, {eq.lat_max, eq.lon_min});
  c.expect(std::abs(width - 1200.0) <= 0.05 * 1200.0, "p6 width " + std::to_string(width));
  c.expect(std::abs(height - 600.0) <= 0.05 * 600.0, "p6 height " + std::to_string(height));
}

void blocking_equivalence(Check& c) {
  synth::GenConfig gen = synth::country_preset(Country::kID, 42);
  gen.n_restaurants = 500;
  const synth::Dataset d = synth::generate(gen);
  c.expect(d.restaurants.size() == 500, "restaurant count");
  BlockingConfig cfg;

  std::set<std::pair<std::string, std::string>> expected;
  for (std::size_t i = 0; i < d.restaurants.size(); ++i) {
    for (std::size_t j = 0; j < d.pois.size(); ++j) {
      if (geo::geohash_encode(d.restaurants[i].location, 6) == geo::geohash_encode(d.pois[j].location, 6)) {
        expected.insert({d.restaurants[i].id, d.pois[j].id});
      }
    }
  }
  std::vector<CandidatePair> blocked = block_pairs(d.restaurants, d.pois, cfg);
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& p : blocked) got.insert({p.restaurant_id, p.poi_id});
  c.expect(got.size() == blocked.size(), "duplicate blocked pairs");
  c.expect(got == expected, "blocked " + std::to_string(got.size()) + " vs brute force " +
                                std::to_string(expected.size()));

  featurize_all(blocked, d.restaurants, d.pois, cfg);
  // Oracle: sort everything by (restaurant, distance, poi), take the first
  // top_k per restaurant, then apply the name threshold.
  std::vector<CandidatePair> all = blocked;
  std::sort(all.begin(), all.end(), [](const CandidatePair& a, const CandidatePair& b) {
    return std::tie(a.restaurant_id, a.features.geo_distance_m, a.poi_id) <
           std::tie(b.restaurant_id, b.features.geo_distance_m, b.poi_id);
  });
  std::set<std::pair<std::string, std::string>> oracle;
  std::map<std::string, std::size_t> taken;
  for (const auto& p : all) {
    if (taken[p.restaurant_id]++ >= cfg.top_k) continue;
    if (p.features.name_lev <= cfg.name_lev_threshold) oracle.insert({p.restaurant_id, p.poi_id});
  }
  std::set<std::pair<std::string, std::string>> kept;
  for (const auto& p : downsample(blocked, cfg)) kept.insert({p.restaurant_id, p.poi_id});
  c.expect(kept == oracle, "downsample " + std::to_string(kept.size()) + " vs oracle " + std::to_string(oracle.size()));
}

void end_to_end(Check& c) {
  std::map<ModelKind, int> passes;
  std::string worst;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto labeled = labeled_dataset(synth::country_preset(Country::kID, seed), seed);
    c.expect(labeled.size() >= 1000 && labeled.size() <= 1500, "labeled " + std::to_string(labeled.size()));
    const TrainTestSplit split = split_train_test(labeled, {0.8, seed});
    for (ModelKind kind : kAllModelKinds) {
      const MetricsReport r = evaluate(train_model(split.train, default_params(kind, seed)), split.test);
      const bool ok = r.accuracy >= 0.90 && r.class2.f1 >= 0.85;
      passes[kind] += ok;
      if (!ok) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "seed %llu %s acc %.3f f1 %.3f; ", static_cast<unsigned long long>(seed),
                      std::string(to_string(kind)).c_str(), r.accuracy, r.class2.f1);
        worst += buf;
      }
    }
  }
  for (ModelKind kind : kAllModelKinds) {
    c.expect(passes[kind] >= 8, std::string(to_string(kind)) + " passed " + std::to_string(passes[kind]) +
                                    "/10: " + worst);
  }
}

void importance_sanity(Check& c) {
  auto check_sum = [&](const TreeModel& m, const std::string& what) {
    const FeatureArray imp = feature_importances(m);
    double sum = 0.0;
    for (double v : imp) {
      c.expect(v >= 0.0, what + " negative importance");
      sum += v;
    }
    c.expect(std::abs(sum - 1.0) <= 1e-9, what + " importances sum to " + std::to_string(sum));
    return imp;
  };
  // Regular synthetic data.
  const auto labeled = labeled_dataset(synth::country_preset(Country::kMY, 5), 5);
  for (ModelKind kind : kAllModelKinds) check_sum(train_model(labeled, default_params(kind, 5)), std::string(to_string(kind)));

  // Name signal only: true matches are placed uniformly in the cell, so
  // distance carries no information, and no record has a street.
  synth::GenConfig gen = synth::country_preset(Country::kID, 3);
  gen.match_placement = synth::MatchPlacement::kCellUniform;
  gen.p_missing_street = 1.0;
  const auto name_only = labeled_dataset(gen, 3);
  for (ModelKind kind : kAllModelKinds) {
    const std::string name(to_string(kind));
    const FeatureArray imp = check_sum(train_model(name_only, default_params(kind, 3)), name + " (name only)");
    const double share = imp[static_cast<std::size_t>(Feature::kNameLev)] +
                         imp[static_cast<std::size_t>(Feature::kNameJaro)];
    c.expect(share > 0.5, name + " name share " + std::to_string(share));
  }
}

void pipeline_determinism(Check& c) {
  TempDir a, b;
  for (const TempDir* dir : {&a, &b}) {
    std::ostringstream out, err;
    const int code = cli::run_cli({"poimatch", "--workdir", dir->path().string(), "--seed", "9", "pipeline",
                                   "--out-dir", "run"},
                                  out, err);
    c.expect(code == 0, "pipeline exit " + std::to_string(code) + ": " + err.str());
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path() / "run")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.path());
    const fs::path other = b.path() / rel;
    ++files;
    if (!fs::exists(other)) {
      c.expect(false, "missing in second run: " + rel.string());
      continue;
    }
    if (rel.string().ends_with(".meta.json")) {
      auto x = nlohmann::json::parse(slurp(entry.path()));
      auto y = nlohmann::json::parse(slurp(other));
      x.erase("created_at");
      y.erase("created_at");
      c.expect(x == y, "metadata differs: " + rel.string());
    } else {
      c.expect(slurp(entry.path()) == slurp(other), "bytes differ: " + rel.string());
    }
  }
  c.expect(files >= 20, "only " + std::to_string(files) + " artifacts");
}

void audit_replay(Check& c) {
  TempDir dir;
  const synth::Dataset d = synth::generate(synth::country_preset(Country::kID, 11));
  write_pairs(dir.path() / "pool.csv", candidate_pool(d, {}));
  const fs::path state_dir = dir.path() / "state";
  std::vector<LabeledPair> expected;
  {
    LabelStore store = LabelStore::open(state_dir, dir.path() / "pool.csv");
    AnnotationState& s = store.state();
    s.sample_initial(500, 1);
    std::size_t labeled = 0;
    while (const PendingItem* item = s.next_pending()) {
      s.record_label(item->id, truth_of(d.truth, s.pool()[item->id]), LabelSource::kHumanInitial);
      ++labeled;
    }
    c.expect(labeled == 500, "initial labels " + std::to_string(labeled));
    const auto round = s.bootstrap_round(2000, 2);
    c.expect(round.queued_for_rectify >= 20, "queued " + std::to_string(round.queued_for_rectify));
    for (const PendingItem& item : s.rectify_queue(20)) s.rectify(item.id, truth_of(d.truth, s.pool()[item.id]));
    c.expect(s.pending().size() == round.queued_for_rectify - 20, "pending after rectification");
    expected = s.labeled_pairs();
  }
  // Replay the raw log onto an empty state over the stored pool.
  AnnotationState fresh(read_pairs(state_dir / LabelStore::kPoolFile));
  std::ifstream log(state_dir / LabelStore::kAuditFile);
  std::size_t events = 0;
  for (std::string line; std::getline(log, line);) {
    fresh.apply(parse_audit_line(line));
    ++events;
  }
  c.expect(events > 500, "events " + std::to_string(events));
  c.expect(fresh.labeled_pairs() == expected, "replayed labeled set differs");
  // And through the store.
  const LabelStore reopened = LabelStore::open(state_dir);
  c.expect(reopened.state().labeled_pairs() == expected, "reopened labeled set differs");
  c.expect(reopened.state().pending() == fresh.pending(), "pending queue differs");
}

void merged_experiment(Check& c) {
  std::map<Country, std::vector<LabeledPair>> data;
  data[Country::kID] = labeled_dataset(synth::country_preset(Country::kID, 0), 0);
  data[Country::kSG] = labeled_dataset(synth::country_preset(Country::kSG, 0), 0);
  ExperimentConfig cfg;
  const ExperimentReport report = cross_country_experiment(data, cfg);
  const std::vector<Country> regimes{Country::kID, Country::kSG, Country::kMERGED};
  c.expect(report.cells.size() == kAllModelKinds.size() * regimes.size() * regimes.size(),
           "cell count " + std::to_string(report.cells.size()));
  for (ModelKind m : kAllModelKinds) {
    for (Country r : regimes) {
      for (Country e : regimes) {
        c.expect(report.find(m, r, e) != nullptr, "missing cell " + std::string(to_string(m)) + " " +
                                                      std::string(to_string(r)) + " " + std::string(to_string(e)));
      }
    }
  }
  std::size_t degraded = 0;
  for (const PrecisionShift& s : precision_shifts(report)) degraded += s.merged_regime < s.own_regime;
  c.expect(degraded >= 1, "merged regime never lowers class2 precision");
}

}  // namespace

int main() {
  criterion("string-metric exemplars", 1, string_exemplars);
  criterion("levenshtein brute-force oracle", 60, levenshtein_oracle);
  criterion("geohash round trip and cell size", 10, geohash_roundtrip);
  criterion("blocking equivalence", 30, blocking_equivalence);
  criterion("end-to-end synthetic reproduction", 300, end_to_end);
  criterion("feature importance sanity", 60, importance_sanity);
  criterion("pipeline determinism", 300, pipeline_determinism);
  criterion("audit log replay", 30, audit_replay);
  criterion("merged-country experiment", 300, merged_experiment);
  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
