#include "poimatch_cli/commands.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "poimatch/blocking.hpp"
#include "poimatch/bootstrap.hpp"
#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/eval.hpp"
#include "poimatch/random.hpp"
#include "poimatch/records.hpp"
#include "poimatch/synthgen.hpp"
#include "poimatch/trees.hpp"
#include "poimatch_cli/config.hpp"
#include "poimatch_cli/digest.hpp"
#include "poimatch_cli/service.hpp"

#ifndef POIMATCH_VERSION
#define POIMATCH_VERSION "unknown"
#endif

namespace poimatch::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Failures that carry their own exit code.
class CliError : public std::runtime_error {
 public:
  CliError(int code, std::string kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(std::move(kind)) {}
  int code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  int code_;
  std::string kind_;
};

struct Context {
  RunConfig cfg;
  fs::path workdir = ".";
  std::ostream* out = nullptr;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return (path.is_absolute() ? path : workdir / path).lexically_normal();
  }

  fs::path input(const std::string& p) const {
    const fs::path path = resolve(p);
    if (!fs::exists(path)) throw CliError(kExitMissingInput, "missing_input", "input file not found: " + path.string());
    return path;
  }

  fs::path output(const std::string& p) const {
    const fs::path path = resolve(p);
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      if (ec) throw IoError(path.parent_path().string(), ec.message());
    }
    return path;
  }

  // Paths in run metadata are recorded relative to the workdir so that two
  // runs in different directories produce the same metadata.
  std::string display(const fs::path& p) const {
    std::error_code ec;
    const fs::path base = fs::weakly_canonical(workdir, ec);
    const fs::path full = fs::weakly_canonical(p, ec);
    const fs::path rel = full.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }
};

struct Artifacts {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  json parameters = json::object();
};

void write_run_metadata(const Context& ctx, const fs::path& meta_path, const std::string& command,
                        const Artifacts& a) {
  auto files = [&](const std::vector<fs::path>& paths) {
    json arr = json::array();
    for (const fs::path& p : paths) arr.push_back({{"path", ctx.display(p)}, {"sha256", sha256_file(p)}});
    return arr;
  };
  json meta{{"command", command},
            {"versions", {{"poimatch", POIMATCH_VERSION}, {"model_format", 1}}},
            {"seed", ctx.cfg.seed},
            {"config_hash", config_hash(ctx.cfg)},
            {"config", to_json(ctx.cfg)},
            {"parameters", a.parameters},
            {"inputs", files(a.inputs)},
            {"outputs", files(a.outputs)},
            {"created_at", utc_timestamp()}};
  std::ofstream out(meta_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(meta_path.string(), "cannot open for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError(meta_path.string(), "write failed");
}

fs::path meta_path_for(const fs::path& output) { return fs::path(output.string() + ".meta.json"); }

PlaceTable load_table(const Context& ctx, const fs::path& path, PlaceKind kind) {
  return load_places(path, kind, ctx.cfg.country, ctx.cfg.blocking.geohash_precision);
}

// ---------------------------------------------------------------------------
// Commands. Each takes resolved options and writes its artifacts plus
// run metadata.

struct GenerateArgs {
  std::string out_dir = "data";
};

fs::path cmd_generate(const Context& ctx, const GenerateArgs& a) {
  const fs::path dir = ctx.resolve(a.out_dir);
  const synth::Dataset data = synth::generate(ctx.cfg.generator);
  synth::write_dataset(dir, data);
  Artifacts art;
  art.outputs = {dir / "restaurants.csv", dir / "pois.csv", dir / "truth.csv"};
  write_run_metadata(ctx, dir / "generate.meta.json", "generate", art);
  *ctx.out << "generated " << data.restaurants.size() << " restaurants, " << data.pois.size() << " POIs, "
           << data.truth.size() << " true matches in " << dir.string() << '\n';
  return dir;
}

struct BlockArgs {
  std::string restaurants;
  std::string pois;
  std::string out = "blocked.csv";
};

fs::path cmd_block(const Context& ctx, const BlockArgs& a) {
  const fs::path rpath = ctx.input(a.restaurants);
  const fs::path ppath = ctx.input(a.pois);
  const PlaceTable restaurants = load_table(ctx, rpath, PlaceKind::kRestaurant);
  const PlaceTable pois = load_table(ctx, ppath, PlaceKind::kPoi);
  const auto pairs = block_pairs(restaurants, pois, ctx.cfg.blocking);
  const fs::path out = ctx.output(a.out);
  write_pairs(out, pairs, false);
  Artifacts art{{rpath, ppath}, {out}, {}};
  write_run_metadata(ctx, meta_path_for(out), "block", art);
  *ctx.out << "blocked " << pairs.size() << " candidate pairs -> " << out.string() << '\n';
  return out;
}

struct FeaturizeArgs {
  std::string restaurants;
  std::string pois;
  std::string pairs;
  std::string out = "pairs.csv";
  bool no_downsample = false;
};

fs::path cmd_featurize(const Context& ctx, const FeaturizeArgs& a) {
  const fs::path rpath = ctx.input(a.restaurants);
  const fs::path ppath = ctx.input(a.pois);
  const fs::path pairs_path = ctx.input(a.pairs);
  const PlaceTable restaurants = load_table(ctx, rpath, PlaceKind::kRestaurant);
  const PlaceTable pois = load_table(ctx, ppath, PlaceKind::kPoi);
  std::vector<CandidatePair> pairs = read_pairs(pairs_path);
  const std::size_t blocked = pairs.size();
  featurize_all(pairs, restaurants, pois, ctx.cfg.blocking);
  if (!a.no_downsample) pairs = downsample(std::move(pairs), ctx.cfg.blocking);
  const fs::path out = ctx.output(a.out);
  write_pairs(out, pairs, true);
  Artifacts art{{rpath, ppath, pairs_path}, {out}, {{"downsample", !a.no_downsample}}};
  write_run_metadata(ctx, meta_path_for(out), "featurize", art);
  *ctx.out << "featurized " << blocked << " pairs, kept " << pairs.size() << " -> " << out.string() << '\n';
  return out;
}

struct SimulateArgs {
  std::string pairs;
  std::string truth;
  std::string out = "labeled.csv";
  std::string state_dir;
};

fs::path cmd_simulate(const Context& ctx, const SimulateArgs& a) {
  const fs::path pairs_path = ctx.input(a.pairs);
  const fs::path truth_path = ctx.input(a.truth);
  const synth::TruthSet truth = synth::read_truth(truth_path);
  const Annotator oracle = [&truth](const CandidatePair& p) {
    return truth.contains({p.restaurant_id, p.poi_id}) ? kMatched : kUnmatched;
  };
  const fs::path out = ctx.output(a.out);
  ProtocolResult result;
  double matched = 0.0;
  std::size_t labeled = 0;
  if (!a.state_dir.empty()) {
    LabelStore store = LabelStore::open(ctx.resolve(a.state_dir), pairs_path);
    result = run_bootstrap_protocol(store.state(), oracle, ctx.cfg.annotation);
    export_labeled(store.state(), out);
    matched = store.state().matched_fraction();
    labeled = store.state().labeled().size();
  } else {
    AnnotationState state(read_pairs(pairs_path));
    result = run_bootstrap_protocol(state, oracle, ctx.cfg.annotation);
    export_labeled(state, out);
    matched = state.matched_fraction();
    labeled = state.labeled().size();
  }
  for (const std::string& w : result.warnings) *ctx.out << "warning: " << w << '\n';
  Artifacts art{{pairs_path, truth_path}, {out}, {}};
  write_run_metadata(ctx, meta_path_for(out), "simulate-annotation", art);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", matched);
  *ctx.out << "labeled " << labeled << " pairs (" << result.human_labels << " human, " << result.auto_negatives
           << " auto-negative), matched fraction " << buf << " -> " << out.string() << '\n';
  return out;
}

struct TrainArgs {
  std::string labeled;
  std::string model = "forest";
  std::string out;
};

fs::path cmd_train(const Context& ctx, const TrainArgs& a) {
  const auto kind = parse_model_kind(a.model);
  if (!kind) throw CliError(kExitConfig, "config", "unknown model kind '" + a.model + "'");
  const fs::path lpath = ctx.input(a.labeled);
  const std::vector<LabeledPair> rows = read_labeled(lpath);
  const SplitSpec spec = ctx.cfg.split();
  const TrainTestSplit split = split_train_test(rows, spec);
  TreeModel::Parts parts = train_model(split.train, ctx.cfg.model_params(*kind)).parts();
  parts.split = spec;
  const TreeModel model(std::move(parts));
  const fs::path out = ctx.output(a.out.empty() ? "model-" + a.model + ".json" : a.out);
  save_model(out, model);
  Artifacts art{{lpath}, {out}, {{"model", a.model}}};
  write_run_metadata(ctx, meta_path_for(out), "train", art);
  *ctx.out << "trained " << a.model << " on " << split.train.size() << " rows (" << split.test.size()
           << " held out) -> " << out.string() << '\n';
  return out;
}

struct EvaluateArgs {
  std::string model;
  std::string labeled;
  std::string out;
  bool full = false;
};

fs::path cmd_evaluate(const Context& ctx, const EvaluateArgs& a) {
  const fs::path mpath = ctx.input(a.model);
  const fs::path lpath = ctx.input(a.labeled);
  const TreeModel model = load_model(mpath);
  std::vector<LabeledPair> rows = read_labeled(lpath);
  std::string dataset = "all";
  if (!a.full && model.split()) {
    rows = split_train_test(rows, *model.split()).test;
    dataset = "test";
  }
  const MetricsReport report = evaluate(model, rows, dataset);
  const fs::path out = ctx.output(a.out.empty() ? "metrics-" + std::string(to_string(model.kind())) + ".csv" : a.out);
  write_metrics_csv(out, report);
  Artifacts art{{mpath, lpath}, {out}, {{"full", a.full}}};
  write_run_metadata(ctx, meta_path_for(out), "evaluate", art);
  *ctx.out << format_summary(report);
  return out;
}

struct MatchRateArgs {
  std::string model;
  std::string pairs;
  std::string restaurants;
  std::string out = "matches.csv";
};

fs::path cmd_matchrate(const Context& ctx, const MatchRateArgs& a) {
  const fs::path mpath = ctx.input(a.model);
  const fs::path ppath = ctx.input(a.pairs);
  const fs::path rpath = ctx.input(a.restaurants);
  const TreeModel model = load_model(mpath);
  const PlaceTable restaurants = load_table(ctx, rpath, PlaceKind::kRestaurant);
  const MatchRate mr = match_rate(model, read_pairs(ppath), restaurants);
  const fs::path out = ctx.output(a.out);
  {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(out.string(), "cannot open for writing");
    csv::write_row(f, {"restaurant_id", "poi_id", "score"});
    for (const BestMatch& b : mr.best) csv::write_row(f, {b.restaurant_id, b.poi_id, csv::format_sig9(b.score)});
    if (!f) throw IoError(out.string(), "write failed");
  }
  Artifacts art{{mpath, ppath, rpath}, {out}, {{"restaurants", mr.restaurants}, {"matched", mr.matched}, {"rate", mr.rate}}};
  write_run_metadata(ctx, meta_path_for(out), "matchrate", art);
  *ctx.out << json{{"restaurants", mr.restaurants}, {"matched", mr.matched}, {"rate", mr.rate}}.dump() << '\n';
  return out;
}

struct ImportanceArgs {
  std::string model;
  std::string out;
};

fs::path cmd_importance(const Context& ctx, const ImportanceArgs& a) {
  const fs::path mpath = ctx.input(a.model);
  const TreeModel model = load_model(mpath);
  const FeatureArray imp = feature_importances(model);
  const fs::path out =
      ctx.output(a.out.empty() ? "importance-" + std::string(to_string(model.kind())) + ".csv" : a.out);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(out.string(), "cannot open for writing");
  csv::write_row(f, {"feature", "importance"});
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    csv::write_row(f, {kFeatureNames[i], csv::format_sig9(imp[i])});
    *ctx.out << kFeatureNames[i] << ' ' << csv::format_sig9(imp[i]) << '\n';
  }
  f.close();
  if (!f) throw IoError(out.string(), "write failed");
  write_run_metadata(ctx, meta_path_for(out), "importance", {{mpath}, {out}, {}});
  return out;
}

struct HistogramArgs {
  std::string labeled;
  std::string out = "histogram.csv";
  std::size_t bins = 20;
  double max_distance = 0.0;
};

fs::path cmd_histogram(const Context& ctx, const HistogramArgs& a) {
  const fs::path lpath = ctx.input(a.labeled);
  if (a.bins == 0) throw CliError(kExitConfig, "config", "--bins must be >= 1");
  const auto rows = read_labeled(lpath);
  const auto hist = feature_histograms(rows, a.bins,
                                       a.max_distance > 0.0 ? std::optional<double>(a.max_distance) : std::nullopt);
  const fs::path out = ctx.output(a.out);
  write_histograms_csv(out, hist);
  write_run_metadata(ctx, meta_path_for(out), "histogram", {{lpath}, {out}, {{"bins", a.bins}}});
  *ctx.out << "wrote " << hist.size() << " feature histograms -> " << out.string() << '\n';
  return out;
}

// Generates, blocks, featurizes and annotates one synthetic country in
// memory.
std::vector<LabeledPair> synthesize_labeled(const RunConfig& cfg, Country country) {
  synth::GenConfig gen = synth::country_preset(country, cfg.seed);
  const synth::Dataset data = synth::generate(gen);
  std::vector<CandidatePair> pairs = block_pairs(data.restaurants, data.pois, cfg.blocking);
  featurize_all(pairs, data.restaurants, data.pois, cfg.blocking);
  AnnotationState state(downsample(std::move(pairs), cfg.blocking));
  run_bootstrap_protocol(
      state,
      [&data](const CandidatePair& p) {
        return data.truth.contains({p.restaurant_id, p.poi_id}) ? kMatched : kUnmatched;
      },
      cfg.annotation);
  return state.labeled_pairs();
}

struct ExperimentArgs {
  std::vector<std::string> labeled;  // COUNTRY=PATH
  std::string out = "experiment.csv";
  std::string summary;
};

fs::path cmd_experiment(const Context& ctx, const ExperimentArgs& a) {
  std::map<Country, std::vector<LabeledPair>> data;
  Artifacts art;
  if (a.labeled.empty()) {
    for (Country c : ctx.cfg.experiment_countries) data[c] = synthesize_labeled(ctx.cfg, c);
    art.parameters["source"] = "synthetic";
  } else {
    for (const std::string& spec : a.labeled) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw CliError(kExitUsage, "usage", "--labeled expects COUNTRY=PATH, got '" + spec + "'");
      const auto country = parse_country(spec.substr(0, eq));
      if (!country || *country == Country::kMERGED) {
        throw CliError(kExitConfig, "config", "unknown country '" + spec.substr(0, eq) + "'");
      }
      if (data.contains(*country)) throw CliError(kExitConfig, "config", "country listed twice: " + spec.substr(0, eq));
      const fs::path p = ctx.input(spec.substr(eq + 1));
      data[*country] = read_labeled(p);
      art.inputs.push_back(p);
    }
    art.parameters["source"] = "files";
  }
  ExperimentConfig ec;
  ec.models = ctx.cfg.experiment_models;
  ec.train_fraction = ctx.cfg.train_fraction;
  ec.seed = ctx.cfg.seed;
  ec.workers = ctx.cfg.workers;
  const ExperimentReport report = cross_country_experiment(data, ec);
  const fs::path out = ctx.output(a.out);
  write_metrics_csv(out, report.cells);
  art.outputs.push_back(out);
  const std::string summary = format_summary(report);
  if (!a.summary.empty()) {
    const fs::path sp = ctx.output(a.summary);
    std::ofstream f(sp, std::ios::binary | std::ios::trunc);
    f << summary;
    if (!f) throw IoError(sp.string(), "write failed");
    art.outputs.push_back(sp);
  }
  write_run_metadata(ctx, meta_path_for(out), "experiment", art);
  *ctx.out << summary;
  return out;
}

struct PipelineArgs {
  std::string out_dir = ".";
};

void cmd_pipeline(const Context& base, const PipelineArgs& a) {
  Context ctx = base;
  ctx.workdir = base.resolve(a.out_dir);
  cmd_generate(ctx, {"data"});
  cmd_block(ctx, {"data/restaurants.csv", "data/pois.csv", "blocked.csv"});
  cmd_featurize(ctx, {"data/restaurants.csv", "data/pois.csv", "blocked.csv", "pairs.csv", false});
  cmd_simulate(ctx, {"pairs.csv", "data/truth.csv", "labeled.csv", ""});
  for (ModelKind kind : kAllModelKinds) {
    const std::string name(to_string(kind));
    cmd_train(ctx, {"labeled.csv", name, "model-" + name + ".json"});
    cmd_evaluate(ctx, {"model-" + name + ".json", "labeled.csv", "metrics-" + name + ".csv", false});
    cmd_importance(ctx, {"model-" + name + ".json", "importance-" + name + ".csv"});
  }
  cmd_matchrate(ctx, {"model-forest.json", "pairs.csv", "data/restaurants.csv", "matches.csv"});
  cmd_histogram(ctx, {"labeled.csv", "histogram.csv", 20, 0.0});
}

// ---------------------------------------------------------------------------
// Annotation service commands

struct AnnotateInitArgs {
  std::string state_dir = "annotation";
  std::string pairs;
  std::string restaurants;
  std::string pois;
  std::size_t initial = 0;
};

void cmd_annotate_init(const Context& ctx, const AnnotateInitArgs& a) {
  const fs::path dir = ctx.resolve(a.state_dir);
  std::optional<fs::path> pool;
  if (!a.pairs.empty()) pool = ctx.input(a.pairs);
  LabelStore store = LabelStore::open(dir, pool);
  if (!a.restaurants.empty()) write_places(dir / AnnotationService::kRestaurantsFile,
                                           load_table(ctx, ctx.input(a.restaurants), PlaceKind::kRestaurant));
  if (!a.pois.empty()) write_places(dir / AnnotationService::kPoisFile, load_table(ctx, ctx.input(a.pois), PlaceKind::kPoi));
  AnnotationState& s = store.state();
  if (a.initial > 0) {
    if (s.round() == 0 && s.labeled().empty() && s.pending().empty()) {
      const auto r = s.sample_initial(a.initial, derive_seed(ctx.cfg.seed, 0));
      if (r.warning) *ctx.out << "warning: " << *r.warning << '\n';
    } else {
      *ctx.out << "state already sampled; not sampling again\n";
    }
  }
  *ctx.out << "state " << dir.string() << ": pool " << s.pool().size() << ", pending " << s.pending().size()
           << ", labeled " << s.labeled().size() << '\n';
}

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }

struct AnnotateServeArgs {
  std::string state_dir = "annotation";
  std::string static_dir;
};

void cmd_annotate_serve(const Context& ctx, const AnnotateServeArgs& a) {
  const fs::path dir = ctx.resolve(a.state_dir);
  if (!fs::exists(dir / LabelStore::kPoolFile)) {
    throw CliError(kExitMissingInput, "missing_input",
                   "state directory " + dir.string() + " has no pool; run 'annotate init' first");
  }
  AnnotationService service = AnnotationService::open(dir);
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = ctx.input(a.static_dir);
  HttpServer server(service, static_dir);
  const auto port = server.bind(ctx.cfg.host, ctx.cfg.port);
  if (!port) {
    throw CliError(kExitPortInUse, "port_in_use",
                   "cannot listen on " + ctx.cfg.host + ":" + std::to_string(ctx.cfg.port));
  }
  *ctx.out << "listening on http://" << ctx.cfg.host << ':' << *port << std::endl;

  g_stop_requested.store(false);
  auto prev_int = std::signal(SIGINT, on_stop_signal);
  auto prev_term = std::signal(SIGTERM, on_stop_signal);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done.load()) {
      if (g_stop_requested.load()) {
        server.stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  });
  server.run();
  done.store(true);
  watcher.join();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  *ctx.out << "stopped\n";
}

struct AnnotateExportArgs {
  std::string state_dir = "annotation";
  std::string out = "labeled.csv";
};

void cmd_annotate_export(const Context& ctx, const AnnotateExportArgs& a) {
  const fs::path dir = ctx.resolve(a.state_dir);
  if (!fs::exists(dir / LabelStore::kPoolFile)) {
    throw CliError(kExitMissingInput, "missing_input", "state directory " + dir.string() + " has no pool");
  }
  LabelStore store = LabelStore::open(dir);
  const fs::path out = ctx.output(a.out);
  export_labeled(store.state(), out);
  write_run_metadata(ctx, meta_path_for(out), "annotate export", {{store.audit_path()}, {out}, {}});
  *ctx.out << "exported " << store.state().labeled().size() << " labeled pairs -> " << out.string() << '\n';
}

// ---------------------------------------------------------------------------

void print_error(std::ostream& err, int code, const std::string& kind, const std::string& message,
                 const json& extra = json::object()) {
  json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  err << j.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"poimatch: POI / restaurant entity resolution pipeline", "poimatch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", POIMATCH_VERSION);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string workdir = ".";
  std::string country;
  unsigned workers = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--workdir", workdir, "Directory relative paths are resolved against");
  app.add_option("--country", country, "Country tag ID, MY, SG or PH (overrides the config)");
  app.add_option("--workers", workers, "Worker threads (overrides the config)");

  // Per-command overrides of config values.
  std::optional<int> precision;
  std::optional<std::size_t> top_k;
  std::optional<double> lev_threshold;
  std::optional<double> train_fraction;
  std::optional<std::size_t> n_restaurants;
  std::optional<std::size_t> initial, batch, rounds;
  std::optional<int> port;
  std::optional<std::string> host;
  bool neighbors = false;
  bool expand_abbrev = false;

  GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Write a synthetic restaurant/POI dataset with ground truth");
  generate->add_option("--out-dir", gen_args.out_dir, "Output directory");
  generate->add_option("--n-restaurants", n_restaurants, "Number of restaurants");

  BlockArgs block_args;
  auto* block = app.add_subcommand("block", "Same-geohash-cell candidate pairs");
  block->add_option("--restaurants", block_args.restaurants, "Restaurant file")->required();
  block->add_option("--pois", block_args.pois, "POI file")->required();
  block->add_option("--out", block_args.out, "Output pair file");
  block->add_option("--precision", precision, "Geohash precision (1-12)");
  block->add_flag("--neighbors", neighbors, "Also pair with the 8 neighboring cells");

  FeaturizeArgs feat_args;
  auto* featurize = app.add_subcommand("featurize", "Compute pair features and downsample");
  featurize->add_option("--restaurants", feat_args.restaurants, "Restaurant file")->required();
  featurize->add_option("--pois", feat_args.pois, "POI file")->required();
  featurize->add_option("--pairs", feat_args.pairs, "Blocked pair file")->required();
  featurize->add_option("--out", feat_args.out, "Output pair file");
  featurize->add_option("--precision", precision, "Geohash precision the records are indexed at");
  featurize->add_option("--top-k", top_k, "Nearest POIs kept per restaurant");
  featurize->add_option("--name-lev-threshold", lev_threshold, "Maximum normalized name Levenshtein");
  featurize->add_flag("--expand-abbreviations", expand_abbrev, "Rewrite jl/jln to jalan before comparing streets");
  featurize->add_flag("--no-downsample", feat_args.no_downsample, "Keep every blocked pair");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate-annotation", "Run the labeling protocol with ground truth as annotator");
  simulate->add_option("--pairs", sim_args.pairs, "Featurized pair file")->required();
  simulate->add_option("--truth", sim_args.truth, "truth.csv")->required();
  simulate->add_option("--out", sim_args.out, "Labeled pair export");
  simulate->add_option("--state-dir", sim_args.state_dir, "Persist the session in this state directory");
  simulate->add_option("--initial", initial, "Initial sample size");
  simulate->add_option("--batch", batch, "Bootstrap batch size");
  simulate->add_option("--rounds", rounds, "Bootstrap rounds");

  auto* annotate = app.add_subcommand("annotate", "Annotation state and HTTP service");
  annotate->require_subcommand(1);
  AnnotateInitArgs init_args;
  auto* ann_init = annotate->add_subcommand("init", "Create a state directory and draw the initial sample");
  ann_init->add_option("--state-dir", init_args.state_dir, "State directory");
  ann_init->add_option("--pairs", init_args.pairs, "Featurized pair file (the pool)");
  ann_init->add_option("--restaurants", init_args.restaurants, "Restaurant file shown to annotators");
  ann_init->add_option("--pois", init_args.pois, "POI file shown to annotators");
  ann_init->add_option("--initial", initial, "Initial sample size");
  AnnotateServeArgs serve_args;
  auto* ann_serve = annotate->add_subcommand("serve", "Serve the annotation API");
  ann_serve->add_option("--state-dir", serve_args.state_dir, "State directory");
  ann_serve->add_option("--port", port, "TCP port (0 picks a free one)");
  ann_serve->add_option("--host", host, "Listen address");
  ann_serve->add_option("--static-dir", serve_args.static_dir, "Serve UI assets from this directory");
  AnnotateExportArgs export_args;
  auto* ann_export = annotate->add_subcommand("export", "Export labeled pairs as CSV");
  ann_export->add_option("--state-dir", export_args.state_dir, "State directory");
  ann_export->add_option("--out", export_args.out, "Output CSV");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Split labeled pairs and train a model");
  train->add_option("--labeled", train_args.labeled, "Labeled pair CSV")->required();
  train->add_option("--model", train_args.model, "tree, forest, adaboost or gbm");
  train->add_option("--out", train_args.out, "Model file");
  train->add_option("--train-fraction", train_fraction, "Fraction of rows used for training");

  EvaluateArgs eval_args;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Metrics on the model's held-out split");
  evaluate_cmd->add_option("--model", eval_args.model, "Model file")->required();
  evaluate_cmd->add_option("--labeled", eval_args.labeled, "Labeled pair CSV")->required();
  evaluate_cmd->add_option("--out", eval_args.out, "Metrics CSV");
  evaluate_cmd->add_flag("--full", eval_args.full, "Evaluate on every row instead of the held-out split");

  MatchRateArgs mr_args;
  auto* matchrate = app.add_subcommand("matchrate", "Fraction of restaurants with a predicted POI match");
  matchrate->add_option("--model", mr_args.model, "Model file")->required();
  matchrate->add_option("--pairs", mr_args.pairs, "Featurized pair file")->required();
  matchrate->add_option("--restaurants", mr_args.restaurants, "Restaurant file")->required();
  matchrate->add_option("--out", mr_args.out, "Best-match CSV");

  ImportanceArgs imp_args;
  auto* importance = app.add_subcommand("importance", "Feature importances of a model");
  importance->add_option("--model", imp_args.model, "Model file")->required();
  importance->add_option("--out", imp_args.out, "Output CSV");

  ExperimentArgs exp_args;
  auto* experiment = app.add_subcommand("experiment", "Per-country versus merged training");
  experiment->add_option("--labeled", exp_args.labeled, "COUNTRY=PATH labeled files (default: synthesize)");
  experiment->add_option("--out", exp_args.out, "Metrics CSV");
  experiment->add_option("--summary", exp_args.summary, "Text summary file");

  HistogramArgs hist_args;
  auto* histogram = app.add_subcommand("histogram", "Per-class feature histograms");
  histogram->add_option("--labeled", hist_args.labeled, "Labeled pair CSV")->required();
  histogram->add_option("--out", hist_args.out, "Output CSV");
  histogram->add_option("--bins", hist_args.bins, "Bins per feature");
  histogram->add_option("--max-distance", hist_args.max_distance, "Upper edge of the distance histogram (meters)");

  PipelineArgs pipe_args;
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage on synthetic data");
  pipeline->add_option("--out-dir", pipe_args.out_dir, "Output directory");
  pipeline->add_option("--n-restaurants", n_restaurants, "Number of restaurants");

  bool dump_defaults = false;
  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");
  config_cmd->add_flag("--dump-defaults", dump_defaults, "Print the built-in defaults instead");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << POIMATCH_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, kExitUsage, "usage", e.what());
    return kExitUsage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    ctx.workdir = workdir;
    std::optional<Country> country_override;
    if (!country.empty()) {
      country_override = parse_country(country);
      if (!country_override || *country_override == Country::kMERGED) {
        throw ConfigError("unknown country '" + country + "'");
      }
    }
    if (dump_defaults) {
      ctx.cfg = RunConfig{};
      ctx.cfg.finalize();
      out << to_json(ctx.cfg).dump(2) << '\n';
      return kExitOk;
    }
    if (!config_path.empty()) {
      const fs::path p = ctx.resolve(config_path);
      if (!fs::exists(p)) throw CliError(kExitMissingInput, "missing_input", "config file not found: " + p.string());
      ctx.cfg = load_config(p.string(), country_override);
    } else {
      ctx.cfg = parse_config(json::object(), country_override);
    }
    RunConfig& cfg = ctx.cfg;
    if (seed) cfg.seed = *seed;
    if (workers > 0) cfg.workers = workers;
    if (precision) cfg.blocking.geohash_precision = *precision;
    if (neighbors) cfg.blocking.neighbor_expansion = true;
    if (expand_abbrev) cfg.blocking.expand_street_abbreviations = true;
    if (top_k) cfg.blocking.top_k = *top_k;
    if (lev_threshold) cfg.blocking.name_lev_threshold = *lev_threshold;
    if (train_fraction) cfg.train_fraction = *train_fraction;
    if (n_restaurants) cfg.generator.n_restaurants = *n_restaurants;
    if (initial) cfg.annotation.initial = *initial;
    if (batch) cfg.annotation.batch = *batch;
    if (rounds) cfg.annotation.rounds = *rounds;
    if (port) cfg.port = *port;
    if (host) cfg.host = *host;
    cfg.finalize();

    if (*generate) cmd_generate(ctx, gen_args);
    else if (*block) cmd_block(ctx, block_args);
    else if (*featurize) cmd_featurize(ctx, feat_args);
    else if (*simulate) cmd_simulate(ctx, sim_args);
    else if (*ann_init) {
      init_args.initial = initial.value_or(cfg.annotation.initial);
      cmd_annotate_init(ctx, init_args);
    } else if (*ann_serve) cmd_annotate_serve(ctx, serve_args);
    else if (*ann_export) cmd_annotate_export(ctx, export_args);
    else if (*train) cmd_train(ctx, train_args);
    else if (*evaluate_cmd) cmd_evaluate(ctx, eval_args);
    else if (*matchrate) cmd_matchrate(ctx, mr_args);
    else if (*importance) cmd_importance(ctx, imp_args);
    else if (*experiment) cmd_experiment(ctx, exp_args);
    else if (*histogram) cmd_histogram(ctx, hist_args);
    else if (*pipeline) cmd_pipeline(ctx, pipe_args);
    else if (*config_cmd) out << to_json(cfg).dump(2) << '\n';
    return kExitOk;
  } catch (const CliError& e) {
    print_error(err, e.code(), e.kind(), e.what());
    return e.code();
  } catch (const ConfigError& e) {
    print_error(err, kExitConfig, "config", e.what());
    return kExitConfig;
  } catch (const ReplayError& e) {
    print_error(err, kExitSchema, "replay", e.what(), {{"line", e.line()}});
    return kExitSchema;
  } catch (const LoadError& e) {
    print_error(err, kExitSchema, "schema", e.what(), {{"path", e.path()}, {"line", e.line()}});
    return kExitSchema;
  } catch (const IoError& e) {
    print_error(err, kExitRuntime, "io", e.what(), {{"path", e.path()}});
    return kExitRuntime;
  } catch (const std::exception& e) {
    print_error(err, kExitRuntime, "runtime", e.what());
    return kExitRuntime;
  }
}

}  // namespace poimatch::cli
