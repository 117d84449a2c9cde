#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "poimatch/bootstrap.hpp"
#include "poimatch/records.hpp"

namespace poimatch::cli {

// The annotation HTTP API as a plain request handler, so it can be driven
// without a socket. Reads take a shared lock; every mutation is serialized
// behind the exclusive lock and goes through the label store, which logs it
// before applying it.
class AnnotationService {
 public:
  struct Response {
    int status = 200;
    std::string body;
  };
  using Query = std::map<std::string, std::string, std::less<>>;

  static constexpr std::string_view kRestaurantsFile = "restaurants.csv";
  static constexpr std::string_view kPoisFile = "pois.csv";

  AnnotationService(LabelStore store, std::optional<PlaceTable> restaurants, std::optional<PlaceTable> pois);

  // Opens a state directory; restaurants.csv / pois.csv inside it are
  // loaded when present and used to show the raw records of each pair.
  static AnnotationService open(const std::filesystem::path& state_dir);

  Response handle(std::string_view method, std::string_view path, const Query& query, std::string_view body);

  // Snapshot of /api/stats.
  std::string stats_json() const;

 private:
  Response next_pair() const;
  Response label(std::size_t id, std::string_view body);
  Response rectify_queue(const Query& query) const;
  Response rectify(std::size_t id, std::string_view body);
  Response bootstrap_round(std::string_view body);
  Response sample(std::string_view body);

  std::string pair_json(PairId id, const PendingItem* pending) const;

  mutable std::shared_mutex mu_;
  LabelStore store_;
  std::optional<PlaceTable> restaurants_;
  std::optional<PlaceTable> pois_;
};

// Socket front end over cpp-httplib.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port (useful with port 0), or nullopt when the address
  // is unavailable.
  std::optional<int> bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace poimatch::cli
