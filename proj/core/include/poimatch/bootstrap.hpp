#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "poimatch/trees.hpp"

namespace poimatch {

enum class LabelSource { kHumanInitial, kHumanRectify, kModelConfirmed };

std::string_view to_string(LabelSource s);
std::optional<LabelSource> parse_label_source(std::string_view s);

// The source is a function of provenance and label: only predicted matches
// are shown to a human for confirmation, so a confirmed 0 is always a model
// auto-negative.
LabelSource label_source(const LabeledPair& lp);

// Position of a pair in the pool, which is sorted by (restaurant_id, poi_id).
using PairId = std::size_t;

struct PendingItem {
  PairId id = 0;
  std::optional<int> predicted_label;
  std::optional<double> score;

  friend bool operator==(const PendingItem&, const PendingItem&) = default;
};

// A rejected annotation request. Maps onto HTTP 404 / 409 / 400.
class RequestError : public std::runtime_error {
 public:
  enum class Kind { kNotFound, kConflict, kBadRequest };
  RequestError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// The current labels cannot support the requested step (e.g. training a tree
// on a single class).
class BootstrapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The audit log could not be replayed. `line()` is 1-based.
class ReplayError : public std::runtime_error {
 public:
  ReplayError(std::size_t line, const std::string& what)
      : std::runtime_error("audit log line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// One audit-log line: {ts, op, pair_id, label, source, round[, score]}.
// op is "enqueue" (pair entered the pending queue, label = model prediction
// if any), "label" (pair left pending or was auto-labeled), or "round"
// (bootstrap round counter advanced; pair_id/label/source are null).
struct AuditEvent {
  std::string ts;
  std::string op;
  std::optional<PairId> pair_id;
  std::optional<int> label;
  std::optional<LabelSource> source;
  int round = 0;
  std::optional<double> score;
};

std::string to_json_line(const AuditEvent& e);
// Throws std::invalid_argument on malformed input.
AuditEvent parse_audit_line(std::string_view line);

// In-memory annotation state. Every mutation is expressed as audit events
// and applied through apply(), so replaying the emitted events onto a fresh
// state over the same pool reproduces it exactly.
class AnnotationState {
 public:
  using EventSink = std::function<void(const AuditEvent&)>;
  using Clock = std::function<std::string()>;

  // Sorts the pool by (restaurant_id, poi_id). Throws ArgumentError on a
  // duplicate pair.
  explicit AnnotationState(std::vector<CandidatePair> pool);

  std::span<const CandidatePair> pool() const { return pool_; }
  const std::map<PairId, LabeledPair>& labeled() const { return labeled_; }
  const std::deque<PendingItem>& pending() const { return pending_; }
  int round() const { return round_; }

  bool is_labeled(PairId id) const { return labeled_.contains(id); }
  const PendingItem* find_pending(PairId id) const;
  // First pending item, if any.
  const PendingItem* next_pending() const;
  std::vector<PendingItem> rectify_queue(std::size_t limit) const;

  std::optional<PairId> find_pair(std::string_view restaurant_id, std::string_view poi_id) const;

  // Labeled pairs in pair-id order.
  std::vector<LabeledPair> labeled_pairs() const;
  double matched_fraction() const;

  struct SampleResult {
    std::size_t sampled = 0;
    std::optional<std::string> warning;
  };
  // Moves up to n uniformly sampled pool pairs into pending without a
  // prediction. Requires round() == 0. A pool with fewer than n free pairs
  // is sampled completely and reported through `warning`.
  SampleResult sample_initial(std::size_t n, std::uint64_t seed);

  // Labels a pending pair. Unknown id: kNotFound; already labeled: kConflict;
  // not pending: kNotFound; bad label: kBadRequest. State is unchanged on
  // error.
  void record_label(PairId id, int label, LabelSource source);

  struct RoundResult {
    std::size_t sampled = 0;
    std::size_t auto_negatives = 0;
    std::size_t queued_for_rectify = 0;
    std::optional<std::string> warning;
  };
  // Trains a decision tree on all current labels, samples n free pairs,
  // auto-labels predicted negatives and queues predicted matches for
  // rectification. Throws BootstrapError unless both classes are labeled.
  RoundResult bootstrap_round(std::size_t n, std::uint64_t seed, const TreeParams& tree_params = {});

  // Human verdict on a queued prediction. Requires a pending pair with a
  // prediction (kNotFound otherwise, kConflict if already labeled).
  void rectify(PairId id, int label);

  // Applies one event; throws std::invalid_argument if it is inconsistent
  // with the current state.
  void apply(const AuditEvent& e);

  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }
  void set_clock(Clock clock) { clock_ = std::move(clock); }

 private:
  void commit(AuditEvent e);
  void check_label_value(int label) const;
  std::vector<PairId> free_pairs() const;

  std::vector<CandidatePair> pool_;
  std::map<PairId, LabeledPair> labeled_;
  std::deque<PendingItem> pending_;
  int round_ = 0;
  EventSink sink_;
  Clock clock_;
};

// ISO-8601 UTC timestamp with millisecond resolution.
std::string utc_timestamp();

// Export CSV: restaurant_id,poi_id,geo_distance_m,name_lev,name_jaro,
// street_lev,label,provenance. Rows in pair-id order; reals use round-trip
// formatting.
void export_labeled(const AnnotationState& state, const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, const std::vector<LabeledPair>& rows);
// Rows read back carry no geohash and street_missing = false.
std::vector<LabeledPair> read_labeled(const std::filesystem::path& path);

// Durable single-writer store: a state directory holding pool.csv (the pair
// file) and audit.jsonl (append-only). Opening replays the log.
class LabelStore {
 public:
  static constexpr std::string_view kPoolFile = "pool.csv";
  static constexpr std::string_view kAuditFile = "audit.jsonl";

  // Opens `state_dir`. When it holds no pool yet, `pool_source` (a pair
  // file) is copied in; without one, opening fails with LoadError. Throws
  // ReplayError when the audit log does not replay cleanly.
  static LabelStore open(const std::filesystem::path& state_dir,
                         const std::optional<std::filesystem::path>& pool_source = std::nullopt);

  LabelStore(LabelStore&&) = default;
  LabelStore& operator=(LabelStore&&) = default;

  const AnnotationState& state() const { return *state_; }
  AnnotationState& state() { return *state_; }
  const std::filesystem::path& directory() const { return dir_; }
  std::filesystem::path audit_path() const { return dir_ / kAuditFile; }

  void set_clock(AnnotationState::Clock clock) { state_->set_clock(std::move(clock)); }

 private:
  LabelStore() = default;

  std::filesystem::path dir_;
  std::unique_ptr<AnnotationState> state_;
  std::unique_ptr<std::ofstream> log_;
};

// Scripted run of the labeling protocol: label an initial uniform sample,
// then for each round train, predict a batch and rectify every predicted
// match. `annotator` plays the human.
struct ProtocolPlan {
  std::size_t initial = 500;
  std::size_t batch = 2000;
  std::size_t rounds = 1;
  std::uint64_t seed = 0;
  TreeParams tree;
};

struct ProtocolResult {
  std::size_t human_labels = 0;
  std::size_t rectified = 0;
  std::size_t auto_negatives = 0;
  std::vector<std::string> warnings;
};

using Annotator = std::function<int(const CandidatePair&)>;
ProtocolResult run_bootstrap_protocol(AnnotationState& state, const Annotator& annotator, const ProtocolPlan& plan);

// Replays an audit log onto a fresh state over `pool`.
AnnotationState replay_audit_log(std::vector<CandidatePair> pool, const std::filesystem::path& audit_path);

}  // namespace poimatch
