#include <gtest/gtest.h>

#include <csignal>
#include <cstdio>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "poimatch/random.hpp"
#include "poimatch_cli/commands.hpp"
#include "poimatch_cli/service.hpp"
#include "test_util.hpp"

namespace poimatch::cli {
namespace {

using json = nlohmann::json;
using testing::TempDir;

std::vector<CandidatePair> make_pool(std::size_t n) {
  Rng rng(42);
  std::vector<CandidatePair> pool;
  for (std::size_t i = 0; i < n; ++i) {
    const bool match = i % 3 == 0;
    pool.push_back({"R" + std::to_string(100 + i / 4), "P" + std::to_string(100 + i), "qw3b8c",
                    {match ? rng.uniform(0, 50) : rng.uniform(100, 800), match ? rng.uniform(0, 0.2) : rng.uniform(0.4, 1),
                     rng.uniform01(), rng.uniform01(), i % 7 == 0}});
  }
  return pool;
}

int truth(const json& pair) { return pair["features"]["name_lev"].get<double>() < 0.3 ? 1 : 0; }

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_pairs(dir / "pairs.csv", make_pool(120));
    std::filesystem::create_directories(dir / "state");
    std::vector<PlaceRecord> rs;
    rs.push_back(PlaceRecord::make("R100", PlaceKind::kRestaurant, "Warung Made", std::string("Jl. Raya"),
                                   {-8.6, 115.2}, Country::kID));
    write_places(dir / "state" / "restaurants.csv", PlaceTable(PlaceKind::kRestaurant, Country::kID, rs));
    LabelStore::open(dir / "state", dir / "pairs.csv");
  }

  AnnotationService::Response call(AnnotationService& s, std::string_view method, std::string_view path,
                                   std::string_view body = {}, AnnotationService::Query query = {}) {
    return s.handle(method, path, query, body);
  }

  json stats(AnnotationService& s) { return json::parse(call(s, "GET", "/api/stats").body); }

  TempDir dir;
};

TEST_F(ServiceTest, EmptyStateEndpoints) {
  AnnotationService s = AnnotationService::open(dir / "state");
  const json st = stats(s);
  EXPECT_EQ(st["pool"], 120);
  EXPECT_EQ(st["labeled"], 0);
  EXPECT_EQ(st["pending"], 0);
  EXPECT_EQ(st["round"], 0);
  EXPECT_EQ(st["by_provenance"]["INITIAL_MANUAL"], 0);
  EXPECT_EQ(call(s, "GET", "/api/pairs/next").status, 204);
  EXPECT_EQ(call(s, "GET", "/api/rectify/queue").body, "[]");
  EXPECT_EQ(call(s, "POST", "/api/bootstrap/round", R"({"n": 10, "seed": 1})").status, 409);
  EXPECT_EQ(call(s, "GET", "/api/nothing").status, 404);
  EXPECT_EQ(call(s, "GET", "/elsewhere").status, 404);
  EXPECT_EQ(call(s, "POST", "/api/stats").status, 405);
  EXPECT_EQ(call(s, "GET", "/api/pairs/3/label").status, 405);
  EXPECT_EQ(call(s, "POST", "/api/pairs/abc/label", R"({"label":1})").status, 404);
}

TEST_F(ServiceTest, LabelFlowAndErrors) {
  AnnotationService s = AnnotationService::open(dir / "state");
  const auto sampled = call(s, "POST", "/api/sample", R"({"n": 30, "seed": 7})");
  ASSERT_EQ(sampled.status, 200) << sampled.body;
  EXPECT_EQ(stats(s)["pending"], 30);

  auto next = call(s, "GET", "/api/pairs/next");
  ASSERT_EQ(next.status, 200);
  const json pair = json::parse(next.body);
  const int id = pair["pair_id"];
  EXPECT_TRUE(pair["features"].contains("street_missing"));
  EXPECT_FALSE(pair.contains("predicted_label"));
  EXPECT_TRUE(pair["restaurant"].contains("id"));

  EXPECT_EQ(call(s, "POST", "/api/pairs/" + std::to_string(id) + "/label", R"({"label": 5})").status, 400);
  EXPECT_EQ(call(s, "POST", "/api/pairs/" + std::to_string(id) + "/label", "not json").status, 400);
  EXPECT_EQ(call(s, "POST", "/api/pairs/99999/label", R"({"label": 1})").status, 404);
  const auto ok = call(s, "POST", "/api/pairs/" + std::to_string(id) + "/label", R"({"label": 1})");
  ASSERT_EQ(ok.status, 200) << ok.body;
  const json ack = json::parse(ok.body);
  EXPECT_EQ(ack["pair_id"], id);
  EXPECT_EQ(ack["label"], 1);
  EXPECT_EQ(ack["provenance"], "INITIAL_MANUAL");
  EXPECT_EQ(call(s, "POST", "/api/pairs/" + std::to_string(id) + "/label", R"({"label": 0})").status, 409);
  EXPECT_EQ(stats(s)["labeled"], 1);
  EXPECT_EQ(stats(s)["human_labels"], 1);

  // Drain the initial sample with the truth rule.
  while (true) {
    const auto r = call(s, "GET", "/api/pairs/next");
    if (r.status == 204) break;
    const json p = json::parse(r.body);
    const std::string path = "/api/pairs/" + std::to_string(p["pair_id"].get<int>()) + "/label";
    ASSERT_EQ(call(s, "POST", path, json{{"label", truth(p)}}.dump()).status, 200);
  }
  EXPECT_EQ(stats(s)["labeled"], 30);
  EXPECT_EQ(call(s, "POST", "/api/sample", R"({"n": 30})").status, 400);
}

TEST_F(ServiceTest, BootstrapRoundAndRectification) {
  AnnotationService s = AnnotationService::open(dir / "state");
  ASSERT_EQ(call(s, "POST", "/api/sample", R"({"n": 40, "seed": 3})").status, 200);
  while (true) {
    const auto r = call(s, "GET", "/api/pairs/next");
    if (r.status == 204) break;
    const json p = json::parse(r.body);
    call(s, "POST", "/api/pairs/" + std::to_string(p["pair_id"].get<int>()) + "/label", json{{"label", truth(p)}}.dump());
  }
  EXPECT_EQ(call(s, "POST", "/api/bootstrap/round", R"({"n": -1, "seed": 3})").status, 400);
  const auto round = call(s, "POST", "/api/bootstrap/round", R"({"n": 50, "seed": 4})");
  ASSERT_EQ(round.status, 200) << round.body;
  const json rr = json::parse(round.body);
  EXPECT_EQ(rr["round"], 1);
  EXPECT_EQ(rr["sampled"], 50);
  EXPECT_EQ(rr["auto_negatives"].get<int>() + rr["queued_for_rectify"].get<int>(), 50);
  const int queued = rr["queued_for_rectify"];
  ASSERT_GT(queued, 1);
  EXPECT_EQ(stats(s)["rectify_pending"], queued);
  EXPECT_EQ(stats(s)["by_source"]["MODEL_CONFIRMED"], rr["auto_negatives"]);

  const json limited = json::parse(call(s, "GET", "/api/rectify/queue", {}, {{"limit", "1"}}).body);
  ASSERT_EQ(limited.size(), 1u);
  EXPECT_EQ(limited[0]["predicted_label"], 1);
  EXPECT_TRUE(limited[0].contains("score"));
  EXPECT_EQ(call(s, "GET", "/api/rectify/queue", {}, {{"limit", "x"}}).status, 400);

  const json queue = json::parse(call(s, "GET", "/api/rectify/queue").body);
  ASSERT_EQ(queue.size(), static_cast<std::size_t>(queued));
  const int first = queue[0]["pair_id"], second = queue[1]["pair_id"];
  const auto confirmed = call(s, "POST", "/api/rectify/" + std::to_string(first), R"({"label": 1})");
  ASSERT_EQ(confirmed.status, 200) << confirmed.body;
  EXPECT_EQ(json::parse(confirmed.body)["provenance"], "BOOTSTRAP_CONFIRMED");
  const auto flipped = call(s, "POST", "/api/rectify/" + std::to_string(second), R"({"label": 0})");
  EXPECT_EQ(json::parse(flipped.body)["provenance"], "BOOTSTRAP_RECTIFIED");
  EXPECT_EQ(call(s, "POST", "/api/rectify/" + std::to_string(first), R"({"label": 1})").status, 404);
  EXPECT_EQ(call(s, "POST", "/api/rectify/99999", R"({"label": 1})").status, 404);
  EXPECT_EQ(call(s, "POST", "/api/rectify/" + std::to_string(queue[2]["pair_id"].get<int>()), "{}").status, 400);
  // A queued pair is also reachable through the generic label endpoint.
  const auto via_label =
      call(s, "POST", "/api/pairs/" + std::to_string(queue[2]["pair_id"].get<int>()) + "/label", R"({"label": 1})");
  EXPECT_EQ(via_label.status, 200);
  EXPECT_EQ(stats(s)["rectify_pending"], queued - 3);
  EXPECT_EQ(stats(s)["by_provenance"]["BOOTSTRAP_RECTIFIED"], 1);
}

TEST_F(ServiceTest, RawRecordsShownWhenAvailable) {
  AnnotationService s = AnnotationService::open(dir / "state");
  call(s, "POST", "/api/sample", R"({"n": 120, "seed": 1})");
  bool saw_named = false;
  while (true) {
    const auto r = call(s, "GET", "/api/pairs/next");
    if (r.status == 204) break;
    const json p = json::parse(r.body);
    if (p["restaurant"]["id"] == "R100") {
      EXPECT_EQ(p["restaurant"]["name"], "Warung Made");
      EXPECT_EQ(p["restaurant"]["street"], "Jl. Raya");
      saw_named = true;
    } else {
      EXPECT_FALSE(p["restaurant"].contains("name"));
    }
    EXPECT_FALSE(p["poi"].contains("name"));
    call(s, "POST", "/api/pairs/" + std::to_string(p["pair_id"].get<int>()) + "/label", R"({"label": 0})");
  }
  EXPECT_TRUE(saw_named);
}

TEST_F(ServiceTest, StateSurvivesReopen) {
  std::string before;
  {
    AnnotationService s = AnnotationService::open(dir / "state");
    call(s, "POST", "/api/sample", R"({"n": 20, "seed": 9})");
    for (int i = 0; i < 7; ++i) {
      const json p = json::parse(call(s, "GET", "/api/pairs/next").body);
      call(s, "POST", "/api/pairs/" + std::to_string(p["pair_id"].get<int>()) + "/label", json{{"label", truth(p)}}.dump());
    }
    before = s.stats_json();
  }
  AnnotationService again = AnnotationService::open(dir / "state");
  EXPECT_EQ(again.stats_json(), before);
  EXPECT_EQ(stats(again)["pending"], 13);
}

TEST_F(ServiceTest, ServesOverHttp) {
  AnnotationService s = AnnotationService::open(dir / "state");
  HttpServer server(s);
  const auto port = server.bind("127.0.0.1", 0);
  ASSERT_TRUE(port);
  std::thread t([&] { server.run(); });
  httplib::Client client("127.0.0.1", *port);
  client.set_connection_timeout(5);
  // Retry until the listener is accepting.
  httplib::Result res;
  for (int i = 0; i < 50 && !(res = client.Get("/api/stats")); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["pool"], 120);

  auto sampled = client.Post("/api/sample", R"({"n": 5, "seed": 2})", "application/json");
  ASSERT_TRUE(sampled);
  EXPECT_EQ(sampled->status, 200);
  auto next = client.Get("/api/pairs/next");
  ASSERT_TRUE(next);
  ASSERT_EQ(next->status, 200);
  const int id = json::parse(next->body)["pair_id"];
  auto labeled = client.Post("/api/pairs/" + std::to_string(id) + "/label", R"({"label": 0})", "application/json");
  ASSERT_TRUE(labeled);
  EXPECT_EQ(labeled->status, 200);
  auto queue = client.Get("/api/rectify/queue?limit=3");
  ASSERT_TRUE(queue);
  EXPECT_EQ(queue->body, "[]");
  auto missing = client.Get("/api/unknown");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  server.stop();
  t.join();

  // The label reached the audit log before the response was sent.
  const LabelStore reopened = LabelStore::open(dir / "state");
  EXPECT_EQ(reopened.state().labeled().size(), 1u);
  EXPECT_TRUE(reopened.state().is_labeled(static_cast<PairId>(id)));
}

TEST_F(ServiceTest, CliServeReportsPortInUse) {
  // Hold a port with a listening socket.
  httplib::Server holder;
  const int port = holder.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::ostringstream out, err;
  const int code = run_cli({"poimatch", "annotate", "serve", "--state-dir", (dir / "state").string(), "--port",
                            std::to_string(port), "--host", "127.0.0.1"},
                           out, err);
  EXPECT_EQ(code, kExitPortInUse) << err.str();
  const json e = json::parse(err.str());
  EXPECT_EQ(e["exit_code"], 7);
  EXPECT_EQ(e["error"], "port_in_use");
}

TEST_F(ServiceTest, CliServeWithoutStateIsMissingInput) {
  std::ostringstream out, err;
  EXPECT_EQ(run_cli({"poimatch", "annotate", "serve", "--state-dir", (dir / "nowhere").string()}, out, err),
            kExitMissingInput);
}

TEST_F(ServiceTest, CliServeSubprocessStopsOnSigterm) {
  const std::string cmd = std::string(POIMATCH_CLI_PATH) + " annotate serve --port 0 --state-dir " +
                          (dir / "state").string() + " & echo PID $!; wait";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  char buf[256];
  int pid = 0, port = 0;
  while ((pid == 0 || port == 0) && std::fgets(buf, sizeof(buf), pipe)) {
    std::string line(buf);
    if (line.rfind("PID ", 0) == 0) pid = std::stoi(line.substr(4));
    if (const auto pos = line.rfind(':'); line.rfind("listening on", 0) == 0 && pos != std::string::npos) {
      port = std::stoi(line.substr(pos + 1));
    }
  }
  ASSERT_GT(pid, 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/stats");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["pool"], 120);
  ::kill(pid, SIGTERM);
  std::string rest;
  while (std::fgets(buf, sizeof(buf), pipe)) rest += buf;
  EXPECT_NE(rest.find("stopped"), std::string::npos) << rest;
  EXPECT_EQ(::pclose(pipe), 0);
}

}  // namespace
}  // namespace poimatch::cli
