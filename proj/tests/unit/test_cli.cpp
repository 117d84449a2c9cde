#include <gtest/gtest.h>

#include <sstream>

#include "json.hpp"
#include "poimatch/bootstrap.hpp"
#include "poimatch/csv.hpp"
#include "poimatch_cli/commands.hpp"
#include "poimatch_cli/config.hpp"
#include "poimatch_cli/digest.hpp"
#include "test_util.hpp"

namespace poimatch::cli {
namespace {

using json = nlohmann::json;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "poimatch");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

json error_of(const CliRun& r) {
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  return json::parse(r.err);
}

std::map<std::string, std::string> csv_row(const std::filesystem::path& path, std::size_t index = 0) {
  std::istringstream in(read_file(path));
  csv::Reader reader(in);
  std::vector<std::string> header, row;
  reader.next(header);
  for (std::size_t i = 0; i <= index; ++i) reader.next(row);
  std::map<std::string, std::string> m;
  for (std::size_t i = 0; i < header.size() && i < row.size(); ++i) m[header[i]] = row[i];
  return m;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  const CliRun bad = run({"generate", "--bogus"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_EQ(error_of(bad)["exit_code"], 2);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"block", "--pois", "x.csv"}).code, kExitUsage);
  const CliRun version = run({"--version"});
  EXPECT_EQ(version.code, kExitOk);
  EXPECT_FALSE(version.out.empty());
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, ConfigErrors) {
  TempDir dir;
  auto with_config = [&](const std::string& text) {
    write_file(dir / "c.json", text);
    return run({"--config", (dir / "c.json").string(), "config"});
  };
  EXPECT_EQ(with_config(R"({"blocking": {"bogus": 1}})").code, kExitConfig);
  EXPECT_EQ(with_config(R"({"unknown_section": {}})").code, kExitConfig);
  EXPECT_EQ(with_config(R"({"seed": "seven"})").code, kExitConfig);
  EXPECT_EQ(with_config(R"({"blocking": {"geohash_precision": 13}})").code, kExitConfig);
  EXPECT_EQ(with_config(R"({"models": {"forest": {"max_features": 9}}})").code, kExitConfig);
  EXPECT_EQ(with_config("{ not json").code, kExitConfig);
  const CliRun ok = with_config(R"({"seed": 5, "blocking": {"top_k": 4}})");
  ASSERT_EQ(ok.code, kExitOk) << ok.err;
  const json effective = json::parse(ok.out);
  EXPECT_EQ(effective["seed"], 5);
  EXPECT_EQ(effective["blocking"]["top_k"], 4);

  const CliRun prec = run({"block", "--restaurants", "r.csv", "--pois", "p.csv", "--precision", "13"});
  EXPECT_EQ(prec.code, kExitConfig);
  EXPECT_EQ(error_of(prec)["error"], "config");
  EXPECT_EQ(run({"--country", "XX", "config"}).code, kExitConfig);
  EXPECT_EQ(run({"--config", (dir / "absent.json").string(), "config"}).code, kExitMissingInput);
}

TEST(Cli, InputErrors) {
  TempDir dir;
  const CliRun missing = run({"--workdir", dir.path().string(), "block", "--restaurants", "r.csv", "--pois", "p.csv"});
  EXPECT_EQ(missing.code, kExitMissingInput);
  EXPECT_EQ(error_of(missing)["error"], "missing_input");

  write_file(dir / "r.csv", "id,title,street,lat,lon\n");
  write_file(dir / "p.csv", "id,name,street,lat,lon\n");
  const CliRun schema = run({"--workdir", dir.path().string(), "block", "--restaurants", "r.csv", "--pois", "p.csv"});
  EXPECT_EQ(schema.code, kExitSchema);
  const json e = error_of(schema);
  EXPECT_EQ(e["line"], 1);
  EXPECT_NE(e["path"].get<std::string>().find("r.csv"), std::string::npos);

  write_file(dir / "r.csv", "id,name,street,lat,lon\nr1,A,,1,2\nr2,B,,x,2\n");
  EXPECT_EQ(error_of(run({"--workdir", dir.path().string(), "block", "--restaurants", "r.csv", "--pois", "p.csv"}))["line"],
            3);
}

TEST(Cli, CorruptAuditLogIsSchemaError) {
  TempDir dir;
  const std::string wd = dir.path().string();
  ASSERT_EQ(run({"--workdir", wd, "pipeline", "--n-restaurants", "60", "--out-dir", "p"}).code, kExitOk);
  const CliRun init = run({"--workdir", wd, "annotate", "init", "--state-dir", "s", "--pairs", "p/pairs.csv",
                        "--initial", "10"});
  ASSERT_EQ(init.code, kExitOk) << init.err;
  const std::string log = read_file(dir / "s" / "audit.jsonl");
  const auto lines = static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n'));
  std::ofstream(dir / "s" / "audit.jsonl", std::ios::app) << "{garbage\n";
  const CliRun exported = run({"--workdir", wd, "annotate", "export", "--state-dir", "s", "--out", "x.csv"});
  EXPECT_EQ(exported.code, kExitSchema);
  EXPECT_EQ(error_of(exported)["line"], lines + 1);
}

TEST(Cli, AnnotateInitAndExport) {
  TempDir dir;
  const std::string wd = dir.path().string();
  ASSERT_EQ(run({"--workdir", wd, "pipeline", "--out-dir", "p"}).code, kExitOk);
  const CliRun init = run({"--workdir", wd, "annotate", "init", "--state-dir", "s", "--pairs", "p/pairs.csv",
                        "--restaurants", "p/data/restaurants.csv", "--pois", "p/data/pois.csv", "--initial", "25"});
  ASSERT_EQ(init.code, kExitOk) << init.err;
  EXPECT_NE(init.out.find("pending 25"), std::string::npos) << init.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "s" / "restaurants.csv"));
  // A second init leaves the sample alone.
  const CliRun again = run({"--workdir", wd, "annotate", "init", "--state-dir", "s", "--initial", "25"});
  EXPECT_NE(again.out.find("not sampling again"), std::string::npos);

  LabelStore store = LabelStore::open(dir / "s");
  for (int i = 0; i < 5; ++i) {
    store.state().record_label(store.state().next_pending()->id, i % 2, LabelSource::kHumanInitial);
  }
  const CliRun exported = run({"--workdir", wd, "annotate", "export", "--state-dir", "s", "--out", "out.csv"});
  ASSERT_EQ(exported.code, kExitOk) << exported.err;
  EXPECT_EQ(read_labeled(dir / "out.csv").size(), 5u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out.csv.meta.json"));
}

TEST(Cli, PipelineIsDeterministicAndRecordsMetadata) {
  TempDir a, b;
  ASSERT_EQ(run({"--workdir", a.path().string(), "--seed", "11", "pipeline", "--out-dir", "run"}).code, kExitOk);
  const CliRun second = run({"--workdir", b.path().string(), "--seed", "11", "pipeline", "--out-dir", "run"});
  ASSERT_EQ(second.code, kExitOk) << second.err;
  std::size_t compared = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a / "run")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    const std::string x = read_file(entry.path()), y = read_file(b.path() / rel);
    if (rel.string().ends_with(".meta.json")) {
      json mx = json::parse(x), my = json::parse(y);
      mx.erase("created_at");
      my.erase("created_at");
      EXPECT_EQ(mx, my) << rel;
    } else {
      EXPECT_EQ(x, y) << rel;
    }
    ++compared;
  }
  EXPECT_GT(compared, 20u);

  const json meta = json::parse(read_file(a / "run" / "labeled.csv.meta.json"));
  EXPECT_EQ(meta["command"], "simulate-annotation");
  EXPECT_EQ(meta["seed"], 11);
  EXPECT_EQ(meta["config_hash"].get<std::string>().size(), 64u);
  EXPECT_TRUE(meta.contains("versions"));
  EXPECT_TRUE(meta.contains("created_at"));
  ASSERT_FALSE(meta["outputs"].empty());
  for (const char* key : {"inputs", "outputs"}) {
    for (const json& f : meta[key]) {
      const auto path = a / "run" / f["path"].get<std::string>();
      EXPECT_EQ(f["sha256"], sha256_file(path)) << path;
    }
  }

  // Different seed, different data.
  TempDir c;
  ASSERT_EQ(run({"--workdir", c.path().string(), "--seed", "12", "pipeline", "--out-dir", "run"}).code, kExitOk);
  EXPECT_NE(read_file(a / "run" / "labeled.csv"), read_file(c / "run" / "labeled.csv"));
}

TEST(Cli, PipelineMetricsAreStrong) {
  TempDir dir;
  ASSERT_EQ(run({"--workdir", dir.path().string(), "pipeline", "--out-dir", "p"}).code, kExitOk);
  for (const char* model : {"tree", "forest", "adaboost", "gbm"}) {
    const auto m = csv_row(dir / "p" / (std::string("metrics-") + model + ".csv"));
    EXPECT_EQ(m.at("model"), model);
    EXPECT_GT(std::stod(m.at("accuracy")), 0.9) << model;
    EXPECT_GT(std::stod(m.at("precision_class2")), 0.8) << model;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "p" / "matches.csv"));
  EXPECT_EQ(read_file(dir / "p" / "histogram.csv").rfind("feature,bin_lo,bin_hi,count_class1,count_class2\n", 0), 0u);
  const auto imp = csv_row(dir / "p" / "importance-forest.csv");
  EXPECT_FALSE(imp.empty());
}

TEST(Cli, StagesComposeByHand) {
  TempDir dir;
  const std::string wd = dir.path().string();
  ASSERT_EQ(run({"--workdir", wd, "--country", "SG", "generate", "--n-restaurants", "120", "--out-dir", "d"}).code,
            kExitOk);
  EXPECT_TRUE(std::filesystem::exists(dir / "d" / "generate.meta.json"));
  ASSERT_EQ(run({"--workdir", wd, "block", "--restaurants", "d/restaurants.csv", "--pois", "d/pois.csv"}).code,
            kExitOk);
  EXPECT_EQ(read_file(dir / "blocked.csv").rfind("restaurant_id,poi_id,geohash6\n", 0), 0u);
  ASSERT_EQ(run({"--workdir", wd, "featurize", "--restaurants", "d/restaurants.csv", "--pois", "d/pois.csv", "--pairs",
                 "blocked.csv", "--top-k", "5"})
                .code,
            kExitOk);
  const CliRun sim = run({"--workdir", wd, "simulate-annotation", "--pairs", "pairs.csv", "--truth", "d/truth.csv",
                       "--initial", "100", "--batch", "200"});
  ASSERT_EQ(sim.code, kExitOk) << sim.err;
  const auto labeled = read_labeled(dir / "labeled.csv");
  EXPECT_EQ(labeled.size(), std::min<std::size_t>(300, read_pairs(dir / "pairs.csv").size()));
  const CliRun train = run({"--workdir", wd, "train", "--labeled", "labeled.csv", "--model", "gbm"});
  ASSERT_EQ(train.code, kExitOk) << train.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "model-gbm.json"));
  EXPECT_EQ(run({"--workdir", wd, "train", "--labeled", "labeled.csv", "--model", "svm"}).code, kExitConfig);
  const CliRun eval = run({"--workdir", wd, "evaluate", "--model", "model-gbm.json", "--labeled", "labeled.csv", "--out",
                        "m.csv", "--full"});
  ASSERT_EQ(eval.code, kExitOk) << eval.err;
  EXPECT_EQ(csv_row(dir / "m.csv").at("n"), std::to_string(labeled.size()));
  const CliRun mr = run({"--workdir", wd, "matchrate", "--model", "model-gbm.json", "--pairs", "pairs.csv",
                      "--restaurants", "d/restaurants.csv"});
  ASSERT_EQ(mr.code, kExitOk) << mr.err;
  const json rate = json::parse(mr.out);
  EXPECT_EQ(rate["restaurants"], 120);
  EXPECT_GT(rate["rate"].get<double>(), 0.3);
}

TEST(Cli, ExperimentFromLabeledFiles) {
  TempDir dir;
  const std::string wd = dir.path().string();
  for (const char* c : {"ID", "PH"}) {
    ASSERT_EQ(run({"--workdir", wd, "--country", c, "pipeline", "--n-restaurants", "150", "--out-dir", c}).code, kExitOk);
  }
  const CliRun exp = run({"--workdir", wd, "experiment", "--labeled", "ID=ID/labeled.csv", "--labeled",
                       "PH=PH/labeled.csv", "--out", "exp.csv", "--summary", "summary.txt"});
  ASSERT_EQ(exp.code, kExitOk) << exp.err;
  std::istringstream in(read_file(dir / "exp.csv"));
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 1u + 4 * 3 * 3);
  EXPECT_NE(read_file(dir / "summary.txt").find("own-country vs merged"), std::string::npos);
  EXPECT_EQ(run({"--workdir", wd, "experiment", "--labeled", "ID/labeled.csv"}).code, kExitUsage);
}

TEST(Config, HashIgnoresWorkersOnly) {
  RunConfig a;
  a.finalize();
  RunConfig b = a;
  b.workers = 8;
  b.finalize();
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  b.finalize();
  EXPECT_NE(config_hash(a), config_hash(b));
  // Parsing the dumped config reproduces it.
  const RunConfig c = parse_config(to_json(a));
  EXPECT_EQ(to_json(c), to_json(a));
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace poimatch::cli
