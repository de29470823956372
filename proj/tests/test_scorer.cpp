#include <atomic>
#include <cmath>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "cog/random.hpp"
#include "cog/remote_scorer.hpp"
#include "cog/scorer.hpp"
#include "cog/synthetic.hpp"

using namespace cog;

namespace {

// Minimal model service. `reply` builds the response for a parsed request.
class StubModel {
 public:
  using Reply = std::function<void(const nlohmann::json&, httplib::Response&)>;

  explicit StubModel(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      reply_(nlohmann::json::parse(req.body), res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubModel() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }

 private:
  Reply reply_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
};

std::vector<ScoreRequest> requests(std::size_t n) {
  std::vector<ScoreRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"text " + std::to_string(i), testing::image("i" + std::to_string(i))});
  }
  return out;
}

RemoteScorerOptions options(const std::string& url, std::size_t max_batch = 256) {
  return RemoteScorerOptions{url, std::chrono::milliseconds(2000), 1, max_batch};
}

}  // namespace

TEST_SUITE("scorer") {

TEST_CASE("score range is checked, never clamped") {
  CHECK(ScoreResult::checked(0.0).prediction == 0.0);
  CHECK(ScoreResult::checked(1.0).prediction == 1.0);
  CHECK_THROWS_AS(ScoreResult::checked(1.0000001), ScoreRangeError);
  CHECK_THROWS_AS(ScoreResult::checked(-1e-12), ScoreRangeError);
  CHECK_THROWS_AS(ScoreResult::checked(std::nan("")), ScoreRangeError);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("parallel_for covers every index and reports the smallest failure") {
  for (std::size_t threads : {1u, 3u, 8u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    try {
      parallel_for(100, threads, [](std::size_t i) {
        if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "17");
    }
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("default batch scoring keeps order and wraps failures") {
  testing::FnScorer s([](const ScoreRequest& r) { return r.text == "text 5" ? 2.0 : 0.25; });
  const auto reqs = requests(8);
  try {
    s.score_batch(reqs, 4);
    FAIL("expected BatchError");
  } catch (const BatchError& e) {
    CHECK(e.index() == 5);
  }
  testing::FnScorer ok([](const ScoreRequest& r) { return (r.text.back() - '0') / 10.0; });
  const auto out = ok.score_batch(reqs, 3);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].prediction == doctest::Approx(i / 10.0));
}

TEST_CASE("caching scorer memoizes by text and image") {
  auto inner = std::make_shared<testing::TableScorer>(0.3);
  CachingScorer cache(inner);
  const ScoreRequest r{"a", testing::image("i1")};
  CHECK(cache.score(r).prediction == 0.3);
  CHECK(cache.score(r).prediction == 0.3);
  CHECK(inner->calls_ == 1);
  const auto reqs = requests(4);
  cache.score_batch(reqs, 2);
  cache.score_batch(reqs, 2);
  CHECK(inner->calls_ == 5);
  CHECK(cache.size() == 5);
}

TEST_CASE("gaussian keys are standard normal in aggregate") {
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = gaussian_from_key(static_cast<std::uint64_t>(i));
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(uniform_index(rng, 7) < 7);
}

TEST_CASE("synthetic scorer is deterministic and thread-invariant") {
  SyntheticCorpusOptions opts;
  opts.entity_count = 40;
  const SyntheticWorldConfig world;
  const auto corpus = generate_synthetic_corpus(opts, world);
  const SyntheticScorer s(corpus, world);
  std::vector<ScoreRequest> reqs;
  for (const auto& e : corpus.entities()) {
    for (std::size_t k = 0; k < 5; ++k) reqs.push_back({e.name, corpus.images()[k]});
  }
  const auto one = s.score_batch(reqs, 1);
  const auto many = s.score_batch(reqs, 8);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(one[i].prediction == many[i].prediction);
    CHECK(one[i].prediction >= 0.0);
    CHECK(one[i].prediction <= 1.0);
  }
  // A matching name beats a foreign one before noise.
  const auto& e = corpus.entities()[0];
  const auto& own = corpus.images()[0];
  CHECK(own.source_entity_id == e.id);
  CHECK(s.logit({e.name, own}) > s.logit({corpus.entities()[1].name, own}));
  CHECK(s.logit({e.name, own}) == doctest::Approx(world.name_weight * 1.0 - world.bias));
  CHECK_THROWS_AS(s.score({"", own}), ValidationError);
}

TEST_CASE("synthetic scorer needs provenance") {
  const auto c = Corpus::build({testing::entity("e1", "A", {"x"})}, {testing::image("i1")});
  CHECK_THROWS_AS(SyntheticScorer(c, SyntheticWorldConfig{}), MissingProvenanceError);
  SyntheticWorldConfig bad;
  bad.noise_sigma = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("synthetic corpus shape") {
  SyntheticCorpusOptions opts;
  opts.entity_count = 500;
  const auto c = generate_synthetic_corpus(opts, SyntheticWorldConfig{});
  CHECK(c.entities().size() == 500);
  CHECK(c.images().size() == 500);
  CHECK(c.pairs().size() == 500);
  for (const auto& e : c.entities()) {
    CHECK(e.concepts.size() >= 2);
    CHECK(e.concepts.size() <= 6);
  }
  const auto again = generate_synthetic_corpus(opts, SyntheticWorldConfig{});
  CHECK(std::equal(c.entities().begin(), c.entities().end(), again.entities().begin()));
  // heavy tail: most entities are long-tailed, a few are very popular
  CHECK(select_long_tailed(c, kLongTailThreshold).size() > 250);
  std::uint64_t top = 0;
  for (const auto& e : c.entities()) top = std::max(top, e.viewtimes);
  CHECK(top > kLongTailThreshold);
}

TEST_CASE("jaccard over token sets") {
  CHECK(jaccard(token_set("Jay Chou, singer"), token_set("singer jay chou")) == 1.0);
  CHECK(jaccard(token_set("a b"), token_set("b c")) == doctest::Approx(1.0 / 3));
  CHECK(jaccard({}, {}) == 0.0);
}

TEST_CASE("remote scorer round trip and chunking") {
  std::atomic<std::size_t> largest{0};
  StubModel model([&](const nlohmann::json& req, httplib::Response& res) {
    nlohmann::json scores = nlohmann::json::array();
    largest = std::max<std::size_t>(largest, req["items"].size());
    for (const auto& item : req["items"]) {
      CHECK(item["image"].get<std::string>().rfind("img/", 0) == 0);
      scores.push_back(item["text"].get<std::string>().size() / 100.0);
    }
    res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
  });
  RemoteScorer s(options(model.url(), 3));
  const auto reqs = requests(7);
  const auto out = s.score_batch(reqs);
  REQUIRE(out.size() == 7);
  CHECK(out[0].prediction == doctest::Approx(0.06));
  CHECK(model.requests() == 3);
  CHECK(largest == 3);
  CHECK(s.score(reqs[0]).prediction == doctest::Approx(0.06));
}

TEST_CASE("remote scorer rejects out-of-range scores") {
  StubModel model([](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"scores":[0.2, 1.7]})", "application/json");
  });
  RemoteScorer s(options(model.url()));
  try {
    s.score_batch(requests(2));
    FAIL("expected ScoreRangeError");
  } catch (const ScoreRangeError& e) {
    CHECK(std::string(e.what()).find("element 1") != std::string::npos);
  }
}

TEST_CASE("remote scorer rejects malformed responses") {
  for (const std::string body : {"not json", R"({"score":[0.1]})", R"({"scores":[0.1, 0.2]})",
                                 R"({"scores":["high"]})"}) {
    StubModel model([body](const nlohmann::json&, httplib::Response& res) {
      res.set_content(body, "application/json");
    });
    RemoteScorer s(options(model.url()));
    CAPTURE(body);
    CHECK_THROWS_AS(s.score(requests(1)[0]), MalformedResponseError);
  }
}

TEST_CASE("remote scorer retries server errors then reports transport failure") {
  std::atomic<int> calls{0};
  StubModel flaky([&](const nlohmann::json&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"scores":[0.4]})", "application/json");
  });
  RemoteScorer s(options(flaky.url()));
  CHECK(s.score(requests(1)[0]).prediction == 0.4);
  CHECK(calls == 2);

  StubModel down([](const nlohmann::json&, httplib::Response& res) { res.status = 500; });
  CHECK_THROWS_AS(RemoteScorer(options(down.url())).score(requests(1)[0]), TransportError);

  // Nothing listens on a port we just released.
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  RemoteScorerOptions o = options("http://127.0.0.1:" + std::to_string(port));
  o.timeout = std::chrono::milliseconds(300);
  CHECK_THROWS_AS(RemoteScorer(o).score(requests(1)[0]), TransportError);
  CHECK_THROWS_AS(RemoteScorer(RemoteScorerOptions{}), ValidationError);
}

TEST_CASE("caching scorer maps batch errors to caller indices") {
  StubModel model([](const nlohmann::json& req, httplib::Response& res) {
    nlohmann::json scores = nlohmann::json::array();
    for (std::size_t i = 0; i < req["items"].size(); ++i) scores.push_back(0.5);
    res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
  });
  CachingScorer cache(std::make_shared<RemoteScorer>(options(model.url())));
  auto reqs = requests(4);
  cache.score(reqs[0]);
  reqs[2].text.clear();
  try {
    cache.score_batch(reqs);
    FAIL("expected BatchError");
  } catch (const BatchError& e) {
    CHECK(e.index() == 2);
  }
}

}
