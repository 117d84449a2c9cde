#include "poimatch_cli/service.hpp"

#include <charconv>
#include <mutex>

#include "httplib.h"
#include "json.hpp"
#include "poimatch/errors.hpp"

namespace poimatch::cli {
namespace {

using nlohmann::json;
using Response = AnnotationService::Response;

Response error(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }
Response ok(const json& j) { return {200, j.dump()}; }

std::optional<std::size_t> parse_id(std::string_view s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// "/api/pairs/17/label" -> {"api", "pairs", "17", "label"}
std::vector<std::string_view> segments(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string_view::npos ? path.size() : j;
    if (end > i) out.push_back(path.substr(i, end - i));
    i = end;
  }
  return out;
}

// Reads an integer field from a JSON object body.
std::optional<long long> int_field(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body[key].is_number_integer()) return std::nullopt;
  return body[key].get<long long>();
}

std::optional<json> parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::optional<int> label_from(std::string_view body) {
  const auto j = parse_body(body);
  if (!j) return std::nullopt;
  const auto label = int_field(*j, "label");
  if (!label || (*label != kUnmatched && *label != kMatched)) return std::nullopt;
  return static_cast<int>(*label);
}

json place_json(const std::string& id, const std::optional<PlaceTable>& table) {
  json j{{"id", id}};
  if (!table) return j;
  const auto idx = table->find(id);
  if (!idx) return j;
  const PlaceRecord& r = (*table)[*idx];
  j["name"] = r.name_raw;
  j["street"] = r.street_raw ? json(*r.street_raw) : json(nullptr);
  j["lat"] = r.location.lat;
  j["lon"] = r.location.lon;
  return j;
}

std::optional<PlaceTable> load_if_present(const std::filesystem::path& path, PlaceKind kind) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  return load_places(path, kind, Country::kID);
}

}  // namespace

AnnotationService::AnnotationService(LabelStore store, std::optional<PlaceTable> restaurants,
                                     std::optional<PlaceTable> pois)
    : store_(std::move(store)), restaurants_(std::move(restaurants)), pois_(std::move(pois)) {}

AnnotationService AnnotationService::open(const std::filesystem::path& state_dir) {
  LabelStore store = LabelStore::open(state_dir);
  return AnnotationService(std::move(store), load_if_present(state_dir / kRestaurantsFile, PlaceKind::kRestaurant),
                           load_if_present(state_dir / kPoisFile, PlaceKind::kPoi));
}

std::string AnnotationService::pair_json(PairId id, const PendingItem* pending) const {
  const CandidatePair& p = store_.state().pool()[id];
  const FeatureVector& f = p.features;
  json j{{"pair_id", id},
         {"restaurant", place_json(p.restaurant_id, restaurants_)},
         {"poi", place_json(p.poi_id, pois_)},
         {"features",
          {{"geo_distance_m", f.geo_distance_m},
           {"name_lev", f.name_lev},
           {"name_jaro", f.name_jaro},
           {"street_lev", f.street_lev},
           {"street_missing", f.street_missing}}}};
  if (pending && pending->predicted_label) j["predicted_label"] = *pending->predicted_label;
  if (pending && pending->score) j["score"] = *pending->score;
  return j.dump();
}

Response AnnotationService::handle(std::string_view method, std::string_view path, const Query& query,
                                   std::string_view body) {
  const auto seg = segments(path);
  const bool get = method == "GET";
  const bool post = method == "POST";
  try {
    if (seg.size() < 2 || seg[0] != "api") return error(404, "no such endpoint");
    if (seg[1] == "stats" && seg.size() == 2) {
      if (!get) return error(405, "use GET");
      return {200, stats_json()};
    }
    if (seg[1] == "pairs" && seg.size() == 3 && seg[2] == "next") {
      if (!get) return error(405, "use GET");
      return next_pair();
    }
    if (seg[1] == "pairs" && seg.size() == 4 && seg[3] == "label") {
      if (!post) return error(405, "use POST");
      const auto id = parse_id(seg[2]);
      if (!id) return error(404, "unknown pair id");
      return label(*id, body);
    }
    if (seg[1] == "rectify" && seg.size() == 3 && seg[2] == "queue") {
      if (!get) return error(405, "use GET");
      return rectify_queue(query);
    }
    if (seg[1] == "rectify" && seg.size() == 3) {
      if (!post) return error(405, "use POST");
      const auto id = parse_id(seg[2]);
      if (!id) return error(404, "unknown pair id");
      return rectify(*id, body);
    }
    if (seg[1] == "bootstrap" && seg.size() == 3 && seg[2] == "round") {
      if (!post) return error(405, "use POST");
      return bootstrap_round(body);
    }
    if (seg[1] == "sample" && seg.size() == 2) {
      if (!post) return error(405, "use POST");
      return sample(body);
    }
    return error(404, "no such endpoint");
  } catch (const IoError& e) {
    return error(500, e.what());
  }
}

std::string AnnotationService::stats_json() const {
  std::shared_lock lock(mu_);
  const AnnotationState& s = store_.state();
  std::map<std::string, std::size_t> by_provenance{
      {"INITIAL_MANUAL", 0}, {"BOOTSTRAP_CONFIRMED", 0}, {"BOOTSTRAP_RECTIFIED", 0}};
  std::map<std::string, std::size_t> by_source{{"HUMAN_INITIAL", 0}, {"HUMAN_RECTIFY", 0}, {"MODEL_CONFIRMED", 0}};
  std::size_t human = 0;
  for (const auto& [id, lp] : s.labeled()) {
    ++by_provenance[std::string(to_string(lp.provenance))];
    const LabelSource src = label_source(lp);
    ++by_source[std::string(to_string(src))];
    human += src != LabelSource::kModelConfirmed;
  }
  std::size_t queued = 0;
  for (const PendingItem& p : s.pending()) queued += p.predicted_label.has_value();
  return json{{"round", s.round()},
              {"pool", s.pool().size()},
              {"labeled", s.labeled().size()},
              {"pending", s.pending().size()},
              {"rectify_pending", queued},
              {"matched_fraction", s.matched_fraction()},
              {"human_labels", human},
              {"by_provenance", by_provenance},
              {"by_source", by_source}}
      .dump();
}

Response AnnotationService::next_pair() const {
  std::shared_lock lock(mu_);
  const PendingItem* item = store_.state().next_pending();
  if (!item) return {204, ""};
  return {200, pair_json(item->id, item)};
}

Response AnnotationService::label(std::size_t id, std::string_view body) {
  const auto value = label_from(body);
  if (!value) return error(400, "body must be {\"label\": 0|1}");
  std::unique_lock lock(mu_);
  AnnotationState& s = store_.state();
  const PendingItem* item = id < s.pool().size() ? s.find_pending(id) : nullptr;
  const LabelSource source =
      item && item->predicted_label ? LabelSource::kHumanRectify : LabelSource::kHumanInitial;
  try {
    s.record_label(id, *value, source);
  } catch (const RequestError& e) {
    switch (e.kind()) {
      case RequestError::Kind::kConflict: return error(409, e.what());
      case RequestError::Kind::kBadRequest: return error(400, e.what());
      case RequestError::Kind::kNotFound: return error(404, e.what());
    }
  }
  const LabeledPair& lp = s.labeled().at(id);
  return ok({{"pair_id", id}, {"label", lp.label}, {"provenance", to_string(lp.provenance)}});
}

Response AnnotationService::rectify_queue(const Query& query) const {
  std::size_t limit = 50;
  if (const auto it = query.find("limit"); it != query.end()) {
    const auto v = parse_id(it->second);
    if (!v) return error(400, "limit must be a non-negative integer");
    limit = *v;
  }
  std::shared_lock lock(mu_);
  json items = json::array();
  for (const PendingItem& p : store_.state().rectify_queue(limit)) items.push_back(json::parse(pair_json(p.id, &p)));
  return ok(items);
}

Response AnnotationService::rectify(std::size_t id, std::string_view body) {
  const auto value = label_from(body);
  if (!value) return error(400, "body must be {\"label\": 0|1}");
  std::unique_lock lock(mu_);
  AnnotationState& s = store_.state();
  try {
    s.rectify(id, *value);
  } catch (const RequestError& e) {
    return error(404, e.what());
  }
  const LabeledPair& lp = s.labeled().at(id);
  return ok({{"pair_id", id}, {"label", lp.label}, {"provenance", to_string(lp.provenance)}});
}

Response AnnotationService::bootstrap_round(std::string_view body) {
  const auto j = parse_body(body);
  if (!j) return error(400, "body must be {\"n\": int, \"seed\": int}");
  const auto n = int_field(*j, "n");
  const auto seed = int_field(*j, "seed");
  if (!n || *n < 0 || !seed || *seed < 0) return error(400, "body must be {\"n\": int >= 0, \"seed\": int >= 0}");
  std::unique_lock lock(mu_);
  try {
    const auto r = store_.state().bootstrap_round(static_cast<std::size_t>(*n), static_cast<std::uint64_t>(*seed));
    json out{{"round", store_.state().round()},
             {"sampled", r.sampled},
             {"auto_negatives", r.auto_negatives},
             {"queued_for_rectify", r.queued_for_rectify}};
    if (r.warning) out["warning"] = *r.warning;
    return ok(out);
  } catch (const BootstrapError& e) {
    return error(409, e.what());
  }
}

Response AnnotationService::sample(std::string_view body) {
  const auto j = parse_body(body);
  if (!j) return error(400, "body must be {\"n\": int, \"seed\": int}");
  const auto n = int_field(*j, "n");
  const auto seed = int_field(*j, "seed");
  if (!n || *n < 0 || !seed || *seed < 0) return error(400, "body must be {\"n\": int >= 0, \"seed\": int >= 0}");
  std::unique_lock lock(mu_);
  try {
    const auto r = store_.state().sample_initial(static_cast<std::size_t>(*n), static_cast<std::uint64_t>(*seed));
    json out{{"sampled", r.sampled}};
    if (r.warning) out["warning"] = *r.warning;
    return ok(out);
  } catch (const BootstrapError& e) {
    return error(409, e.what());
  }
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  // httplib's default also sets SO_REUSEPORT, which would let a second
  // server share a port that is already taken.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    AnnotationService::Query query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    if (r.status != 204) res.set_content(r.body, "application/json");
  };
  const char* pattern = R"(/api/.*)";
  impl_->server.Get(pattern, forward);
  impl_->server.Post(pattern, forward);
  if (static_dir) impl_->server.set_mount_point("/", static_dir->string());
}

HttpServer::~HttpServer() = default;

std::optional<int> HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    return p > 0 ? std::optional<int>(p) : std::nullopt;
  }
  if (!impl_->server.bind_to_port(host, port)) return std::nullopt;
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace poimatch::cli
