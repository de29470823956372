#include "cog/service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <unordered_set>

#include "cog/error.hpp"
#include "cog/text.hpp"

namespace cog {

std::string_view to_string(ItemStatus s) {
  switch (s) {
    case ItemStatus::Pending: return "pending";
    case ItemStatus::Accepted: return "accepted";
    case ItemStatus::Rejected: return "rejected";
  }
  return "pending";
}

std::string_view to_string(Decision d) { return d == Decision::Accept ? "accept" : "reject"; }

Decision parse_decision(std::string_view s) {
  if (s == "accept") return Decision::Accept;
  if (s == "reject") return Decision::Reject;
  throw ValidationError("decision must be \"accept\" or \"reject\"");
}

std::optional<ItemStatus> parse_status_filter(std::string_view s) {
  if (s == "all") return std::nullopt;
  if (s == "pending") return ItemStatus::Pending;
  if (s == "accepted") return ItemStatus::Accepted;
  if (s == "rejected") return ItemStatus::Rejected;
  throw ValidationError("status must be pending, accepted, rejected or all");
}

std::string item_id_for(std::string_view entity_id, std::string_view image_id) {
  std::uint64_t h = text::fnv1a(entity_id);
  h = text::fnv1a("\x1f", h);
  h = text::fnv1a(image_id, h);
  char buf[24];
  std::snprintf(buf, sizeof buf, "q-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - secs).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

Json to_json(const QueueItem& item) {
  Json j{{"item_id", item.item_id},
         {"status", to_string(item.status)},
         {"entity_name", item.entity_name},
         {"image_locator", item.image_locator}};
  j["decided_by"] = item.decided_by ? Json(*item.decided_by) : Json(nullptr);
  j["decided_at"] = item.decided_at ? Json(*item.decided_at) : Json(nullptr);
  j["verdict"] = to_json(item.verdict);
  return j;
}

Json to_json(const DecisionRecord& r) {
  return Json{{"item_id", r.item_id},
              {"annotator", r.annotator},
              {"decision", to_string(r.decision)},
              {"timestamp", r.timestamp}};
}

// ---------------------------------------------------------------------------
// EventLog

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open log " + path_.string() + ": " + std::strerror(errno));

  std::string content;
  char buf[1 << 16];
  ::lseek(fd_, 0, SEEK_SET);
  for (;;) {
    const ssize_t n = ::read(fd_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("cannot read log " + path_.string() + ": " + std::strerror(errno));
    }
    if (n == 0) break;
    content.append(buf, static_cast<std::size_t>(n));
  }

  const auto complete = content.rfind('\n');
  const std::size_t keep = complete == std::string::npos ? 0 : complete + 1;
  if (keep < content.size()) {
    // Torn final record from an interrupted write.
    if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
      throw Error("cannot truncate log " + path_.string() + ": " + std::strerror(errno));
    }
  }
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < keep) {
    const auto nl = content.find('\n', pos);
    ++line_no;
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (text::trim(line).empty()) continue;
    try {
      replayed_.push_back(Json::parse(line));
    } catch (const Json::parse_error&) {
      throw Error("corrupt record at " + path_.string() + ":" + std::to_string(line_no));
    }
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
  }
}

void EventLog::append(const Json& event) {
  std::string line = event.dump();
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("log append failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error("log fsync failed: " + std::string(std::strerror(errno)));
}

// ---------------------------------------------------------------------------
// VerificationQueue

VerificationQueue::VerificationQueue(EventLog* log, Clock clock)
    : log_(log), clock_(clock ? std::move(clock) : Clock(utc_timestamp)) {}

void VerificationQueue::insert_locked(QueueItem item) {
  order_.push_back(item.item_id);
  auto id = item.item_id;
  items_.emplace(std::move(id), std::move(item));
}

void VerificationQueue::replay(std::span<const Json> events) {
  std::lock_guard lock(mutex_);
  for (const auto& e : events) {
    const auto kind = e.value("event", std::string{});
    if (kind == "enqueue") {
      QueueItem item;
      item.item_id = e.at("item_id").get<std::string>();
      item.verdict = verdict_from_json(e.at("verdict"));
      item.entity_name = e.value("entity_name", std::string{});
      item.image_locator = e.value("image_locator", std::string{});
      if (items_.contains(item.item_id)) throw Error("log enqueues " + item.item_id + " twice");
      insert_locked(std::move(item));
    } else if (kind == "decision") {
      DecisionRecord r{e.at("item_id").get<std::string>(), e.at("annotator").get<std::string>(),
                       parse_decision(e.at("decision").get<std::string>()),
                       e.at("timestamp").get<std::string>()};
      const auto it = items_.find(r.item_id);
      if (it == items_.end()) throw Error("log decides unknown item " + r.item_id);
      if (it->second.status != ItemStatus::Pending) {
        throw Error("log decides " + r.item_id + " twice");
      }
      it->second.status = r.decision == Decision::Accept ? ItemStatus::Accepted : ItemStatus::Rejected;
      it->second.decided_by = r.annotator;
      it->second.decided_at = r.timestamp;
      decisions_.push_back(std::move(r));
    }
  }
}

std::size_t VerificationQueue::enqueue_rejections(std::span<const GroundingVerdict> verdicts,
                                                  const Corpus* corpus) {
  std::lock_guard lock(mutex_);
  return enqueue_locked(verdicts, corpus, false);
}

std::size_t VerificationQueue::enqueue_new_rejections(std::span<const GroundingVerdict> verdicts,
                                                      const Corpus* corpus) {
  std::lock_guard lock(mutex_);
  return enqueue_locked(verdicts, corpus, true);
}

std::size_t VerificationQueue::enqueue_locked(std::span<const GroundingVerdict> verdicts,
                                              const Corpus* corpus, bool skip_existing) {
  std::vector<QueueItem> staged;
  std::unordered_set<std::string> batch_ids;
  for (const auto& v : verdicts) {
    if (skip_existing && (v.stage1_accept || items_.contains(item_id_for(v.entity_id, v.image_id)) ||
                          batch_ids.contains(item_id_for(v.entity_id, v.image_id)))) {
      continue;
    }
    if (v.stage1_accept) {
      throw ValidationError("verdict (" + v.entity_id + ", " + v.image_id +
                            ") was accepted by stage 1 and cannot be queued");
    }
    QueueItem item;
    item.item_id = item_id_for(v.entity_id, v.image_id);
    if (items_.contains(item.item_id) || !batch_ids.insert(item.item_id).second) {
      throw DuplicateItemError("pair (" + v.entity_id + ", " + v.image_id + ") is already queued");
    }
    item.verdict = v;
    if (corpus) {
      if (const auto* e = corpus->find_entity(v.entity_id)) item.entity_name = e->name;
      if (const auto* i = corpus->find_image(v.image_id)) item.image_locator = i->locator;
    }
    staged.push_back(std::move(item));
  }
  for (auto& item : staged) {
    if (log_) {
      log_->append(Json{{"event", "enqueue"},
                        {"item_id", item.item_id},
                        {"entity_name", item.entity_name},
                        {"image_locator", item.image_locator},
                        {"verdict", to_json(item.verdict)}});
    }
    insert_locked(std::move(item));
  }
  return staged.size();
}

QueueItem VerificationQueue::record_decision(const std::string& item_id,
                                             const std::string& annotator, Decision decision) {
  if (annotator.empty()) throw ValidationError("annotator must be non-empty");
  std::lock_guard lock(mutex_);
  const auto it = items_.find(item_id);
  if (it == items_.end()) throw NotFoundError("no queue item " + item_id);
  if (it->second.status != ItemStatus::Pending) {
    throw AlreadyDecidedError("item " + item_id + " was already " +
                              std::string(to_string(it->second.status)) + " by " +
                              it->second.decided_by.value_or("?"));
  }
  DecisionRecord r{item_id, annotator, decision, clock_()};
  if (log_) log_->append(Json{{"event", "decision"}, {"item_id", r.item_id},
                              {"annotator", r.annotator}, {"decision", to_string(r.decision)},
                              {"timestamp", r.timestamp}});
  auto& item = it->second;
  item.status = decision == Decision::Accept ? ItemStatus::Accepted : ItemStatus::Rejected;
  item.decided_by = r.annotator;
  item.decided_at = r.timestamp;
  decisions_.push_back(std::move(r));
  return item;
}

std::optional<QueueItem> VerificationQueue::get(const std::string& item_id) const {
  std::lock_guard lock(mutex_);
  const auto it = items_.find(item_id);
  if (it == items_.end()) return std::nullopt;
  return it->second;
}

bool VerificationQueue::contains(const std::string& item_id) const {
  std::lock_guard lock(mutex_);
  return items_.contains(item_id);
}

VerificationQueue::Page VerificationQueue::list(std::optional<ItemStatus> status,
                                                std::size_t offset, std::size_t limit) const {
  std::lock_guard lock(mutex_);
  Page page;
  for (const auto& id : order_) {
    const auto& item = items_.at(id);
    if (status && item.status != *status) continue;
    if (page.total >= offset && page.items.size() < limit) page.items.push_back(item);
    ++page.total;
  }
  return page;
}

std::vector<DecisionRecord> VerificationQueue::decisions() const {
  std::lock_guard lock(mutex_);
  return decisions_;
}

std::size_t VerificationQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

// ---------------------------------------------------------------------------

EvalReport recompute_with_decisions(std::span<const LabeledVerdict> base_verdicts,
                                    std::span<const DecisionRecord> decisions) {
  std::vector<LabeledVerdict> adjusted(base_verdicts.begin(), base_verdicts.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    const auto& v = adjusted[i].verdict;
    index.emplace(item_id_for(v.entity_id, v.image_id), i);
  }
  for (const auto& d : decisions) {
    const auto it = index.find(d.item_id);
    if (it == index.end()) throw NotFoundError("decision references unknown item " + d.item_id);
    auto& v = adjusted[it->second].verdict;
    if (v.stage1_accept) {
      throw ValidationError("item " + d.item_id + " was accepted by stage 1; humans only review rejections");
    }
    v.final_label = d.decision == Decision::Accept;
  }
  EvalReport report;
  if (!adjusted.empty()) {
    report.classification = classification_metrics(std::span<const LabeledVerdict>(adjusted));
  }
  return report;
}

// ---------------------------------------------------------------------------
// GroundingService

namespace {

std::string pair_key(std::string_view e, std::string_view i) {
  return std::string(e) + '\x1f' + std::string(i);
}

}  // namespace

GroundingService::GroundingService(Corpus corpus, std::shared_ptr<const Scorer> scorer,
                                   ServiceConfig config, VerificationQueue::Clock clock)
    : corpus_(std::move(corpus)),
      scorer_(std::move(scorer)),
      config_(std::move(config)),
      stats_(corpus_.entities().empty() ? ConceptStats{}
                                        : compute_concept_stats(corpus_.entities())),
      log_(config_.log_path),
      queue_(&log_, std::move(clock)) {
  config_.stages.validate();
  if (!scorer_) throw ValidationError("service needs a scorer");
  std::lock_guard lock(verdict_mutex_);
  for (const auto& e : log_.replayed()) {
    if (e.value("event", std::string{}) != "verdict") continue;
    std::optional<bool> actual;
    if (const auto it = e.find("actual"); it != e.end() && !it->is_null()) actual = it->get<bool>();
    remember_locked(verdict_from_json(e.at("verdict")), actual);
  }
  queue_.replay(log_.replayed());
}

void GroundingService::remember_locked(const GroundingVerdict& v, std::optional<bool> actual) {
  auto key = pair_key(v.entity_id, v.image_id);
  const auto it = verdicts_.find(key);
  if (it == verdicts_.end()) {
    verdict_order_.push_back(key);
    verdicts_.emplace(std::move(key), std::make_pair(v, actual));
  } else {
    it->second = {v, actual};
  }
}

GroundingService::GroundResult GroundingService::ground(const std::string& entity_id,
                                                        std::span<const std::string> image_ids,
                                                        bool enqueue) {
  const auto& entity = corpus_.entity(entity_id);
  std::vector<const ImageRef*> images;
  for (const auto& id : image_ids) images.push_back(&corpus_.image(id));

  GroundResult result;
  result.verdicts.resize(images.size());
  StageConfig stages = config_.stages;
  stages.threads = 1;
  parallel_for(images.size(), config_.stages.threads, [&](std::size_t i) {
    result.verdicts[i] = ground_pair(entity, *images[i], *scorer_, stats_, config_.strategy, stages);
  });

  {
    std::lock_guard lock(verdict_mutex_);
    for (const auto& v : result.verdicts) {
      const auto actual = corpus_.truth(v.entity_id, v.image_id);
      log_.append(Json{{"event", "verdict"},
                       {"verdict", to_json(v)},
                       {"actual", actual ? Json(*actual) : Json(nullptr)}});
      remember_locked(v, actual);
    }
  }
  if (enqueue) result.enqueued = queue_.enqueue_new_rejections(result.verdicts, &corpus_);
  return result;
}

std::vector<RankedCandidate> GroundingService::rank(
    const std::string& entity_id, std::span<const std::string> candidate_ids) const {
  const auto& entity = corpus_.entity(entity_id);
  std::vector<ImageRef> candidates;
  std::unordered_set<std::string_view> seen;
  for (const auto& id : candidate_ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate candidate " + id);
    candidates.push_back(corpus_.image(id));
  }
  return rank_candidates(entity, candidates, *scorer_, config_.strategy, config_.stages.threads);
}

std::vector<LabeledVerdict> GroundingService::labeled_verdicts() const {
  std::lock_guard lock(verdict_mutex_);
  std::vector<LabeledVerdict> out;
  for (const auto& key : verdict_order_) {
    const auto& [v, actual] = verdicts_.at(key);
    if (actual) out.push_back(LabeledVerdict{v, *actual});
  }
  return out;
}

EvalReport GroundingService::report(bool with_human) const {
  const auto base = labeled_verdicts();
  if (!with_human) return recompute_with_decisions(base, {});
  std::unordered_set<std::string> known;
  for (const auto& lv : base) known.insert(item_id_for(lv.verdict.entity_id, lv.verdict.image_id));
  std::vector<DecisionRecord> applicable;
  for (auto& d : queue_.decisions()) {
    if (known.contains(d.item_id)) applicable.push_back(std::move(d));
  }
  return recompute_with_decisions(base, applicable);
}

}  // namespace cog
