#include "poimatch/bootstrap.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "json.hpp"
#include "poimatch/csv.hpp"
#include "poimatch/errors.hpp"
#include "poimatch/random.hpp"

namespace poimatch {
namespace {

using nlohmann::json;

const std::vector<std::string> kExportHeader{"restaurant_id", "poi_id",     "geo_distance_m", "name_lev",
                                             "name_jaro",     "street_lev", "label",          "provenance"};

bool pair_less(const CandidatePair& a, const CandidatePair& b) {
  if (a.restaurant_id != b.restaurant_id) return a.restaurant_id < b.restaurant_id;
  return a.poi_id < b.poi_id;
}

}  // namespace

std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::kHumanInitial: return "HUMAN_INITIAL";
    case LabelSource::kHumanRectify: return "HUMAN_RECTIFY";
    case LabelSource::kModelConfirmed: return "MODEL_CONFIRMED";
  }
  return "?";
}

std::optional<LabelSource> parse_label_source(std::string_view s) {
  if (s == "HUMAN_INITIAL") return LabelSource::kHumanInitial;
  if (s == "HUMAN_RECTIFY") return LabelSource::kHumanRectify;
  if (s == "MODEL_CONFIRMED") return LabelSource::kModelConfirmed;
  return std::nullopt;
}

LabelSource label_source(const LabeledPair& lp) {
  switch (lp.provenance) {
    case Provenance::kInitialManual: return LabelSource::kHumanInitial;
    case Provenance::kBootstrapRectified: return LabelSource::kHumanRectify;
    case Provenance::kBootstrapConfirmed:
      return lp.label == kMatched ? LabelSource::kHumanRectify : LabelSource::kModelConfirmed;
  }
  return LabelSource::kHumanInitial;
}

std::string to_json_line(const AuditEvent& e) {
  json j;
  j["ts"] = e.ts;
  j["op"] = e.op;
  j["pair_id"] = e.pair_id ? json(*e.pair_id) : json(nullptr);
  j["label"] = e.label ? json(*e.label) : json(nullptr);
  j["source"] = e.source ? json(to_string(*e.source)) : json(nullptr);
  j["round"] = e.round;
  if (e.score) j["score"] = *e.score;
  return j.dump();
}

AuditEvent parse_audit_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("invalid JSON: ") + ex.what());
  }
  if (!j.is_object()) throw std::invalid_argument("event is not a JSON object");
  try {
    AuditEvent e;
    e.ts = j.at("ts").get<std::string>();
    e.op = j.at("op").get<std::string>();
    if (!j.at("pair_id").is_null()) e.pair_id = j["pair_id"].get<PairId>();
    if (!j.at("label").is_null()) e.label = j["label"].get<int>();
    if (!j.at("source").is_null()) {
      e.source = parse_label_source(j["source"].get<std::string>());
      if (!e.source) throw std::invalid_argument("unknown source");
    }
    e.round = j.at("round").get<int>();
    if (j.contains("score") && !j["score"].is_null()) e.score = j["score"].get<double>();
    return e;
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("bad event field: ") + ex.what());
  }
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ---------------------------------------------------------------------------

AnnotationState::AnnotationState(std::vector<CandidatePair> pool) : pool_(std::move(pool)), clock_(&utc_timestamp) {
  std::sort(pool_.begin(), pool_.end(), pair_less);
  for (std::size_t i = 1; i < pool_.size(); ++i) {
    if (!pair_less(pool_[i - 1], pool_[i])) {
      throw ArgumentError("duplicate pair (" + pool_[i].restaurant_id + ", " + pool_[i].poi_id + ") in pool");
    }
  }
}

const PendingItem* AnnotationState::find_pending(PairId id) const {
  const auto it = std::find_if(pending_.begin(), pending_.end(), [id](const PendingItem& p) { return p.id == id; });
  return it == pending_.end() ? nullptr : &*it;
}

const PendingItem* AnnotationState::next_pending() const { return pending_.empty() ? nullptr : &pending_.front(); }

std::vector<PendingItem> AnnotationState::rectify_queue(std::size_t limit) const {
  std::vector<PendingItem> out;
  for (const PendingItem& p : pending_) {
    if (out.size() >= limit) break;
    if (p.predicted_label == kMatched) out.push_back(p);
  }
  return out;
}

std::optional<PairId> AnnotationState::find_pair(std::string_view restaurant_id, std::string_view poi_id) const {
  const auto it = std::lower_bound(pool_.begin(), pool_.end(), std::pair{restaurant_id, poi_id},
                                   [](const CandidatePair& p, const auto& key) {
                                     if (p.restaurant_id != key.first) return p.restaurant_id < key.first;
                                     return p.poi_id < key.second;
                                   });
  if (it == pool_.end() || it->restaurant_id != restaurant_id || it->poi_id != poi_id) return std::nullopt;
  return static_cast<PairId>(it - pool_.begin());
}

std::vector<LabeledPair> AnnotationState::labeled_pairs() const {
  std::vector<LabeledPair> out;
  out.reserve(labeled_.size());
  for (const auto& [id, lp] : labeled_) out.push_back(lp);
  return out;
}

double AnnotationState::matched_fraction() const {
  if (labeled_.empty()) return 0.0;
  std::size_t matched = 0;
  for (const auto& [id, lp] : labeled_) matched += lp.label == kMatched;
  return static_cast<double>(matched) / static_cast<double>(labeled_.size());
}

std::vector<PairId> AnnotationState::free_pairs() const {
  std::vector<bool> busy(pool_.size(), false);
  for (const auto& [id, lp] : labeled_) busy[id] = true;
  for (const PendingItem& p : pending_) busy[p.id] = true;
  std::vector<PairId> out;
  for (PairId id = 0; id < pool_.size(); ++id) {
    if (!busy[id]) out.push_back(id);
  }
  return out;
}

void AnnotationState::check_label_value(int label) const {
  if (label != kUnmatched && label != kMatched) {
    throw RequestError(RequestError::Kind::kBadRequest, "label must be 0 or 1");
  }
}

void AnnotationState::commit(AuditEvent e) {
  e.ts = clock_ ? clock_() : std::string();
  if (sink_) sink_(e);
  apply(e);
}

namespace {

std::vector<PairId> sample_without_replacement(std::vector<PairId> candidates, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = std::min(n, candidates.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(candidates[i], candidates[i + rng.uniform_index(candidates.size() - i)]);
  }
  candidates.resize(k);
  return candidates;
}

}  // namespace

AnnotationState::SampleResult AnnotationState::sample_initial(std::size_t n, std::uint64_t seed) {
  if (round_ != 0) throw BootstrapError("initial sample is only allowed in round 0");
  const std::vector<PairId> batch = sample_without_replacement(free_pairs(), n, seed);
  SampleResult result{batch.size(), std::nullopt};
  if (batch.size() < n) {
    result.warning = "pool has only " + std::to_string(batch.size()) + " free pairs; requested " + std::to_string(n);
  }
  for (PairId id : batch) commit({{}, "enqueue", id, std::nullopt, std::nullopt, round_, std::nullopt});
  return result;
}

void AnnotationState::record_label(PairId id, int label, LabelSource source) {
  if (id >= pool_.size()) throw RequestError(RequestError::Kind::kNotFound, "unknown pair id " + std::to_string(id));
  if (is_labeled(id)) throw RequestError(RequestError::Kind::kConflict, "pair " + std::to_string(id) + " is already labeled");
  const PendingItem* item = find_pending(id);
  if (!item) throw RequestError(RequestError::Kind::kNotFound, "pair " + std::to_string(id) + " is not pending");
  check_label_value(label);
  const LabelSource expected = item->predicted_label ? LabelSource::kHumanRectify : LabelSource::kHumanInitial;
  if (source != expected) {
    throw RequestError(RequestError::Kind::kBadRequest,
                       "source " + std::string(to_string(source)) + " does not apply to pair " + std::to_string(id) +
                           "; expected " + std::string(to_string(expected)));
  }
  commit({{}, "label", id, label, source, round_, std::nullopt});
}

void AnnotationState::rectify(PairId id, int label) {
  if (id >= pool_.size()) throw RequestError(RequestError::Kind::kNotFound, "unknown pair id " + std::to_string(id));
  if (is_labeled(id)) throw RequestError(RequestError::Kind::kConflict, "pair " + std::to_string(id) + " is already labeled");
  const PendingItem* item = find_pending(id);
  if (!item || !item->predicted_label) {
    throw RequestError(RequestError::Kind::kNotFound, "pair " + std::to_string(id) + " has no pending prediction");
  }
  check_label_value(label);
  commit({{}, "label", id, label, LabelSource::kHumanRectify, round_, std::nullopt});
}

AnnotationState::RoundResult AnnotationState::bootstrap_round(std::size_t n, std::uint64_t seed,
                                                              const TreeParams& tree_params) {
  std::size_t positives = 0;
  for (const auto& [id, lp] : labeled_) positives += lp.label == kMatched;
  if (labeled_.empty() || positives == 0 || positives == labeled_.size()) {
    throw BootstrapError("bootstrap round needs labeled pairs of both classes (labeled=" +
                         std::to_string(labeled_.size()) + ", matched=" + std::to_string(positives) + ")");
  }
  const TreeModel tree = train_decision_tree(labeled_pairs(), tree_params);
  const std::vector<PairId> batch = sample_without_replacement(free_pairs(), n, seed);

  RoundResult result;
  result.sampled = batch.size();
  if (batch.size() < n) {
    result.warning = "pool has only " + std::to_string(batch.size()) + " free pairs; requested " + std::to_string(n);
  }
  const int this_round = round_ + 1;
  for (PairId id : batch) {
    const Prediction p = predict(tree, pool_[id].features);
    if (p.label == kMatched) {
      commit({{}, "enqueue", id, kMatched, std::nullopt, this_round, p.score});
      ++result.queued_for_rectify;
    } else {
      commit({{}, "label", id, kUnmatched, LabelSource::kModelConfirmed, this_round, p.score});
      ++result.auto_negatives;
    }
  }
  commit({{}, "round", std::nullopt, std::nullopt, std::nullopt, this_round, std::nullopt});
  return result;
}

void AnnotationState::apply(const AuditEvent& e) {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (e.op == "round") {
    if (e.round != round_ + 1) fail("round event " + std::to_string(e.round) + " after round " + std::to_string(round_));
    round_ = e.round;
    return;
  }
  if (e.op != "enqueue" && e.op != "label") fail("unknown op '" + e.op + "'");
  if (!e.pair_id) fail("missing pair_id");
  const PairId id = *e.pair_id;
  if (id >= pool_.size()) fail("pair_id " + std::to_string(id) + " outside the pool");
  if (is_labeled(id)) fail("pair " + std::to_string(id) + " already labeled");
  const auto it = std::find_if(pending_.begin(), pending_.end(), [id](const PendingItem& p) { return p.id == id; });

  if (e.op == "enqueue") {
    if (it != pending_.end()) fail("pair " + std::to_string(id) + " already pending");
    if (e.label && *e.label != kUnmatched && *e.label != kMatched) fail("bad predicted label");
    pending_.push_back({id, e.label, e.score});
    return;
  }

  if (!e.label || (*e.label != kUnmatched && *e.label != kMatched)) fail("label event needs label 0 or 1");
  if (!e.source) fail("label event needs a source");
  LabeledPair lp{pool_[id], *e.label, Provenance::kInitialManual};
  if (it != pending_.end()) {
    if (it->predicted_label) {
      if (*e.source != LabelSource::kHumanRectify) fail("predicted pair must be labeled by HUMAN_RECTIFY");
      lp.provenance = *e.label == *it->predicted_label ? Provenance::kBootstrapConfirmed : Provenance::kBootstrapRectified;
    } else {
      if (*e.source != LabelSource::kHumanInitial) fail("unpredicted pair must be labeled by HUMAN_INITIAL");
      lp.provenance = Provenance::kInitialManual;
    }
    pending_.erase(it);
  } else {
    if (*e.source != LabelSource::kModelConfirmed || *e.label != kUnmatched) {
      fail("only MODEL_CONFIRMED negatives may label a pair that is not pending");
    }
    lp.provenance = Provenance::kBootstrapConfirmed;
  }
  labeled_.emplace(id, std::move(lp));
}

// ---------------------------------------------------------------------------

void write_labeled(const std::filesystem::path& path, const std::vector<LabeledPair>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  csv::write_row(out, kExportHeader);
  for (const LabeledPair& lp : rows) {
    const FeatureVector& f = lp.pair.features;
    csv::write_row(out, {lp.pair.restaurant_id, lp.pair.poi_id, csv::format_roundtrip(f.geo_distance_m),
                         csv::format_roundtrip(f.name_lev), csv::format_roundtrip(f.name_jaro),
                         csv::format_roundtrip(f.street_lev), std::to_string(lp.label),
                         std::string(to_string(lp.provenance))});
  }
  if (!out) throw IoError(path.string(), "write failed");
}

void export_labeled(const AnnotationState& state, const std::filesystem::path& path) {
  write_labeled(path, state.labeled_pairs());
}

std::vector<LabeledPair> read_labeled(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  csv::Reader reader(in);
  std::vector<std::string> fields;
  std::vector<LabeledPair> rows;
  try {
    if (!reader.next(fields) || fields != kExportHeader) throw LoadError(path.string(), 1, "unrecognized labeled-pair header");
    while (reader.next(fields)) {
      if (fields.size() == 1 && fields[0].empty()) continue;
      const std::size_t line = reader.line();
      if (fields.size() != kExportHeader.size()) throw LoadError(path.string(), line, "wrong number of fields");
      LabeledPair lp;
      lp.pair.restaurant_id = fields[0];
      lp.pair.poi_id = fields[1];
      std::array<double, 4> v{};
      for (std::size_t k = 0; k < 4; ++k) {
        const auto d = csv::parse_double(fields[2 + k]);
        if (!d) throw LoadError(path.string(), line, "bad value in column " + kExportHeader[2 + k]);
        v[k] = *d;
      }
      lp.pair.features = {v[0], v[1], v[2], v[3], false};
      if (fields[6] != "0" && fields[6] != "1") throw LoadError(path.string(), line, "label must be 0 or 1");
      lp.label = fields[6] == "1" ? kMatched : kUnmatched;
      const auto prov = parse_provenance(fields[7]);
      if (!prov) throw LoadError(path.string(), line, "unknown provenance '" + fields[7] + "'");
      lp.provenance = *prov;
      rows.push_back(std::move(lp));
    }
  } catch (const LoadError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw LoadError(path.string(), reader.line(), e.what());
  }
  return rows;
}

ProtocolResult run_bootstrap_protocol(AnnotationState& state, const Annotator& annotator, const ProtocolPlan& plan) {
  ProtocolResult result;
  const auto sample = state.sample_initial(plan.initial, derive_seed(plan.seed, 0));
  if (sample.warning) result.warnings.push_back(*sample.warning);
  while (const PendingItem* item = state.next_pending()) {
    const PairId id = item->id;
    state.record_label(id, annotator(state.pool()[id]), LabelSource::kHumanInitial);
    ++result.human_labels;
  }
  for (std::size_t r = 0; r < plan.rounds; ++r) {
    const auto round = state.bootstrap_round(plan.batch, derive_seed(plan.seed, r + 1), plan.tree);
    if (round.warning) result.warnings.push_back(*round.warning);
    result.auto_negatives += round.auto_negatives;
    while (const PendingItem* item = state.next_pending()) {
      const PairId id = item->id;
      state.rectify(id, annotator(state.pool()[id]));
      ++result.human_labels;
      ++result.rectified;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

AnnotationState replay_audit_log(std::vector<CandidatePair> pool, const std::filesystem::path& audit_path) {
  AnnotationState state(std::move(pool));
  std::ifstream in(audit_path, std::ios::binary);
  if (!in) return state;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (csv::trim(line).empty()) continue;
    try {
      state.apply(parse_audit_line(line));
    } catch (const std::invalid_argument& e) {
      throw ReplayError(n, e.what());
    }
  }
  return state;
}

LabelStore LabelStore::open(const std::filesystem::path& state_dir,
                            const std::optional<std::filesystem::path>& pool_source) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(state_dir, ec);
  if (ec) throw IoError(state_dir.string(), ec.message());
  const fs::path pool_path = state_dir / kPoolFile;
  if (!fs::exists(pool_path)) {
    if (!pool_source) throw LoadError(pool_path.string(), 0, "state directory has no pool; provide a pair file");
    write_pairs(pool_path, read_pairs(*pool_source));
  }

  LabelStore store;
  store.dir_ = state_dir;
  store.state_ = std::make_unique<AnnotationState>(replay_audit_log(read_pairs(pool_path), store.audit_path()));
  store.log_ = std::make_unique<std::ofstream>(store.audit_path(), std::ios::binary | std::ios::app);
  if (!*store.log_) throw IoError(store.audit_path().string(), "cannot open audit log for appending");
  std::ofstream* log = store.log_.get();
  const std::string audit = store.audit_path().string();
  store.state_->set_event_sink([log, audit](const AuditEvent& e) {
    *log << to_json_line(e) << '\n';
    log->flush();
    if (!*log) throw IoError(audit, "audit log write failed");
  });
  return store;
}

}  // namespace poimatch
