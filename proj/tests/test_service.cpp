#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "cog/service.hpp"

using namespace cog;

namespace {

GroundingVerdict rejected(const std::string& e, const std::string& i, double p = 0.2) {
  GroundingVerdict v;
  v.entity_id = e;
  v.image_id = i;
  v.stage1_prediction = p;
  return v;
}

VerificationQueue::Clock fixed_clock() {
  return [] { return std::string("2024-01-01T00:00:00.000Z"); };
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::filesystem::path& p, const std::string& needle) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.find(needle) != std::string::npos;
  return n;
}

// Every concept of the fixture entities scores 0.9 against its own image
// and names score 0.3, so stage 1 rejects and stage 2 decides.
std::shared_ptr<Scorer> fixture_scorer() {
  return std::make_shared<testing::FnScorer>([](const ScoreRequest& r) {
    if (r.text.find(',') == std::string::npos && r.text.find(' ') == std::string::npos) {
      return r.image.id == "i1" ? 0.9 : 0.05;
    }
    return r.text.rfind("Faye Wong", 0) == 0 && r.image.id == "i2" ? 0.8 : 0.3;
  });
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("item ids are stable per pair") {
  CHECK(item_id_for("e1", "i1") == item_id_for("e1", "i1"));
  CHECK(item_id_for("e1", "i1") != item_id_for("e1", "i2"));
  CHECK(item_id_for("e1", "i1").size() == 18);
  CHECK(item_id_for("e1", "i1").rfind("q-", 0) == 0);
}

TEST_CASE("queue enqueue and first decision wins") {
  VerificationQueue q(nullptr, fixed_clock());
  const std::vector<GroundingVerdict> vs{rejected("e1", "i1"), rejected("e1", "i2")};
  CHECK(q.enqueue_rejections(vs) == 2);
  CHECK(q.size() == 2);
  CHECK_THROWS_AS(q.enqueue_rejections(std::vector{rejected("e1", "i1")}), DuplicateItemError);
  auto accepted = rejected("e1", "i3");
  accepted.stage1_accept = true;
  CHECK_THROWS_AS(q.enqueue_rejections(std::vector{rejected("e2", "i9"), accepted}), ValidationError);
  CHECK(q.size() == 2);  // all-or-nothing

  const auto id = item_id_for("e1", "i1");
  const auto item = q.record_decision(id, "ann1", Decision::Accept);
  CHECK(item.status == ItemStatus::Accepted);
  CHECK(item.decided_by == "ann1");
  CHECK_THROWS_AS(q.record_decision(id, "ann2", Decision::Reject), AlreadyDecidedError);
  CHECK(q.get(id)->decided_by == "ann1");
  CHECK_THROWS_AS(q.record_decision("q-unknown", "ann1", Decision::Accept), NotFoundError);
  CHECK_THROWS_AS(q.record_decision(item_id_for("e1", "i2"), "", Decision::Accept), ValidationError);
  CHECK(q.decisions().size() == 1);
}

TEST_CASE("queue listing filters and pages") {
  VerificationQueue q(nullptr, fixed_clock());
  std::vector<GroundingVerdict> vs;
  for (int i = 0; i < 7; ++i) vs.push_back(rejected("e", "i" + std::to_string(i)));
  q.enqueue_rejections(vs);
  q.record_decision(item_id_for("e", "i2"), "a", Decision::Reject);
  const auto pending = q.list(ItemStatus::Pending, 0, 100);
  CHECK(pending.total == 6);
  const auto page = q.list(ItemStatus::Pending, 2, 3);
  CHECK(page.total == 6);
  REQUIRE(page.items.size() == 3);
  CHECK(page.items[0].verdict.image_id == "i3");
  CHECK(q.list(ItemStatus::Rejected, 0, 10).items.size() == 1);
  CHECK(q.list(std::nullopt, 0, 100).total == 7);
  CHECK(parse_status_filter("all") == std::nullopt);
  CHECK(parse_status_filter("accepted") == ItemStatus::Accepted);
  CHECK_THROWS_AS(parse_status_filter("done"), ValidationError);
  CHECK_THROWS_AS(parse_decision("maybe"), ValidationError);
}

TEST_CASE("concurrent decisions on one item produce exactly one record") {
  testing::TempDir dir;
  EventLog log(dir / "events.log");
  VerificationQueue q(&log, fixed_clock());
  q.enqueue_rejections(std::vector{rejected("e1", "i1")});
  std::atomic<int> wins{0}, conflicts{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      try {
        q.record_decision(item_id_for("e1", "i1"), "ann" + std::to_string(t), Decision::Accept);
        ++wins;
      } catch (const AlreadyDecidedError&) {
        ++conflicts;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(wins == 1);
  CHECK(conflicts == 7);
  CHECK(count_lines(dir / "events.log", "\"decision\"") == 1);
}

TEST_CASE("event log replays and drops a torn tail") {
  testing::TempDir dir;
  const auto path = dir / "events.log";
  {
    EventLog log(path);
    VerificationQueue q(&log, fixed_clock());
    q.enqueue_rejections(std::vector{rejected("e1", "i1"), rejected("e1", "i2")});
    q.record_decision(item_id_for("e1", "i1"), "ann", Decision::Reject);
  }
  const auto intact = read_file(path);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"event":"decision","item_id":")" << item_id_for("e1", "i2") << R"(","annot)";
  }
  EventLog log(path);
  CHECK(read_file(path) == intact);
  VerificationQueue q(&log, fixed_clock());
  q.replay(log.replayed());
  CHECK(q.size() == 2);
  CHECK(q.get(item_id_for("e1", "i1"))->status == ItemStatus::Rejected);
  CHECK(q.get(item_id_for("e1", "i2"))->status == ItemStatus::Pending);

  // a corrupt complete line is an error, not silently skipped
  std::ofstream(path, std::ios::app) << "garbage\n";
  CHECK_THROWS_AS(EventLog{path}, Error);
}

TEST_CASE("recompute with decisions overrides final labels") {
  std::vector<LabeledVerdict> base;
  auto pos_rejected = rejected("e1", "i1");
  base.push_back({pos_rejected, true});
  auto neg_rejected = rejected("e1", "i2");
  base.push_back({neg_rejected, false});
  auto accepted = rejected("e2", "i2", 0.9);
  accepted.stage1_accept = accepted.final_label = true;
  base.push_back({accepted, true});

  const auto plain = recompute_with_decisions(base, {});
  CHECK(plain.classification->tp == 1);
  CHECK(plain.classification->fn == 1);

  const std::vector<DecisionRecord> ds{{item_id_for("e1", "i1"), "a", Decision::Accept, "t"},
                                       {item_id_for("e1", "i2"), "a", Decision::Reject, "t"}};
  const auto human = recompute_with_decisions(base, ds);
  CHECK(human.classification->tp == 2);
  CHECK(human.classification->fn == 0);
  CHECK(human.classification->f1 == 1.0);

  const std::vector<DecisionRecord> bad{{"q-0000000000000000", "a", Decision::Accept, "t"}};
  CHECK_THROWS_AS(recompute_with_decisions(base, bad), NotFoundError);
  const std::vector<DecisionRecord> on_accepted{{item_id_for("e2", "i2"), "a", Decision::Reject, "t"}};
  CHECK_THROWS_AS(recompute_with_decisions(base, on_accepted), ValidationError);
}

TEST_CASE("service grounds, queues and survives a restart") {
  testing::TempDir dir;
  ServiceConfig cfg;
  cfg.log_path = dir / "svc.log";
  cfg.stages.threads = 3;
  EvalReport before;
  std::vector<QueueItem> items_before;
  {
    GroundingService svc(testing::fixture_corpus(), fixture_scorer(), cfg, fixed_clock());
    const std::vector<std::string> images{"i1", "i2", "i3", "i6"};
    const auto r = svc.ground("e1", images);
    REQUIRE(r.verdicts.size() == 4);
    CHECK(r.enqueued == 4);
    const auto r2 = svc.ground("e2", std::vector<std::string>{"i2", "i1"});
    CHECK(r2.verdicts[0].stage1_accept);
    CHECK(r2.enqueued == 1);
    CHECK(svc.ground("e1", images).enqueued == 0);  // already queued
    CHECK(svc.ground("e3", std::vector<std::string>{"i3"}, false).enqueued == 0);

    const auto item = svc.queue().get(item_id_for("e1", "i1"));
    REQUIRE(item);
    CHECK(item->entity_name == "Jay Chou");
    CHECK(item->image_locator == "img/i1.jpg");
    CHECK(item->verdict.p_h.has_value());

    svc.queue().record_decision(item_id_for("e1", "i2"), "ann", Decision::Accept);
    svc.queue().record_decision(item_id_for("e1", "i6"), "ann", Decision::Reject);
    before = svc.report(true);
    items_before = svc.queue().list(std::nullopt, 0, 1000).items;
    CHECK(svc.report(false) != before);
    CHECK_THROWS_AS(svc.ground("nope", images), NotFoundError);
    CHECK_THROWS_AS(svc.rank("e1", std::vector<std::string>{"i1", "i1"}), ValidationError);
    CHECK(svc.rank("e1", std::vector<std::string>{"i2", "i1"}).size() == 2);
  }
  GroundingService again(testing::fixture_corpus(), fixture_scorer(), cfg, fixed_clock());
  CHECK(again.queue().list(std::nullopt, 0, 1000).items == items_before);
  CHECK(again.report(true) == before);
}

TEST_CASE("service rejects a missing scorer") {
  testing::TempDir dir;
  ServiceConfig cfg;
  cfg.log_path = dir / "svc.log";
  CHECK_THROWS_AS(GroundingService(testing::fixture_corpus(), nullptr, cfg), ValidationError);
}

}
