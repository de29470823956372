#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cog/corpus.hpp"
#include "cog/eval.hpp"
#include "cog/fusion.hpp"
#include "cog/scorer.hpp"
#include "cog/serialize.hpp"

namespace cog {

enum class ItemStatus { Pending, Accepted, Rejected };
enum class Decision { Accept, Reject };

std::string_view to_string(ItemStatus s);
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);
// "pending", "accepted", "rejected"; nullopt for "all".
std::optional<ItemStatus> parse_status_filter(std::string_view s);

struct QueueItem {
  std::string item_id;
  GroundingVerdict verdict;
  std::string entity_name;    // denormalized for reviewers
  std::string image_locator;  // denormalized for reviewers
  ItemStatus status = ItemStatus::Pending;
  std::optional<std::string> decided_by;
  std::optional<std::string> decided_at;

  bool operator==(const QueueItem&) const = default;
};

struct DecisionRecord {
  std::string item_id;
  std::string annotator;
  Decision decision = Decision::Accept;
  std::string timestamp;

  bool operator==(const DecisionRecord&) const = default;
};

// Stable queue id for an (entity, image) pair.
std::string item_id_for(std::string_view entity_id, std::string_view image_id);

Json to_json(const QueueItem& item);
Json to_json(const DecisionRecord& record);

// Append-only JSONL event log. Each event is written with a single write()
// and fsync'd before append() returns. On open, a torn trailing line (no
// newline) is discarded and truncated away.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Events recovered when the log was opened, in write order.
  const std::vector<Json>& replayed() const { return replayed_; }

  void append(const Json& event);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mutex_;
  std::vector<Json> replayed_;
};

// Human-verification queue of stage-1 rejections. Decisions are first-wins
// and immutable; every state change is logged before it becomes visible.
class VerificationQueue {
 public:
  using Clock = std::function<std::string()>;

  // `log` may be null for an in-memory queue.
  explicit VerificationQueue(EventLog* log, Clock clock = {});

  // Applies enqueue/decision events (other events are ignored).
  void replay(std::span<const Json> events);

  // Throws ValidationError for stage-1 accepted verdicts and
  // DuplicateItemError for a pair already queued. All-or-nothing.
  std::size_t enqueue_rejections(std::span<const GroundingVerdict> verdicts, const Corpus* corpus = nullptr);
  // Queues the stage-1 rejections that are not queued yet and skips the
  // rest. Returns the number added.
  std::size_t enqueue_new_rejections(std::span<const GroundingVerdict> verdicts,
                                     const Corpus* corpus = nullptr);

  // Throws NotFoundError or AlreadyDecidedError.
  QueueItem record_decision(const std::string& item_id, const std::string& annotator,
                            Decision decision);

  std::optional<QueueItem> get(const std::string& item_id) const;
  bool contains(const std::string& item_id) const;

  struct Page {
    std::vector<QueueItem> items;
    std::size_t total = 0;  // matching items before paging
  };
  Page list(std::optional<ItemStatus> status, std::size_t offset, std::size_t limit) const;

  std::vector<DecisionRecord> decisions() const;
  std::size_t size() const;

 private:
  void insert_locked(QueueItem item);
  std::size_t enqueue_locked(std::span<const GroundingVerdict> verdicts, const Corpus* corpus,
                             bool skip_existing);

  EventLog* log_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, QueueItem> items_;
  std::vector<DecisionRecord> decisions_;
};

// Overrides final labels with human decisions and recomputes the
// classification metrics. Throws NotFoundError for a decision on an unknown
// item and ValidationError for one on a stage-1 accepted verdict.
EvalReport recompute_with_decisions(std::span<const LabeledVerdict> base_verdicts,
                                    std::span<const DecisionRecord> decisions);

std::string utc_timestamp();

struct ServiceConfig {
  ConceptStrategy strategy = ConceptStrategy::All;
  StageConfig stages;
  std::filesystem::path log_path = "decisions.log";
};

// Grounding pipeline plus verification queue over one corpus. All public
// methods are safe to call concurrently.
class GroundingService {
 public:
  GroundingService(Corpus corpus, std::shared_ptr<const Scorer> scorer, ServiceConfig config,
                   VerificationQueue::Clock clock = {});

  struct GroundResult {
    std::vector<GroundingVerdict> verdicts;
    std::size_t enqueued = 0;
  };
  // Runs both stages for each image; with `enqueue`, stage-1 rejections not
  // yet queued are added to the verification queue.
  GroundResult ground(const std::string& entity_id, std::span<const std::string> image_ids,
                      bool enqueue = true);

  std::vector<RankedCandidate> rank(const std::string& entity_id,
                                    std::span<const std::string> candidate_ids) const;

  // Classification report over grounded pairs with known ground truth.
  EvalReport report(bool with_human) const;

  std::vector<LabeledVerdict> labeled_verdicts() const;

  VerificationQueue& queue() { return queue_; }
  const VerificationQueue& queue() const { return queue_; }
  const Corpus& corpus() const { return corpus_; }
  const ServiceConfig& config() const { return config_; }

 private:
  void remember_locked(const GroundingVerdict& v, std::optional<bool> actual);

  Corpus corpus_;
  std::shared_ptr<const Scorer> scorer_;
  ServiceConfig config_;
  ConceptStats stats_;
  EventLog log_;
  VerificationQueue queue_;

  mutable std::mutex verdict_mutex_;
  std::vector<std::string> verdict_order_;
  std::unordered_map<std::string, std::pair<GroundingVerdict, std::optional<bool>>> verdicts_;
};

}  // namespace cog
