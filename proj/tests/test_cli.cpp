#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "cog/cli.hpp"

using nlohmann::json;
using testing::fixture;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cog_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cog::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> corpus_flags(const std::filesystem::path& dir) {
  return {"--entities", (dir / "entities.jsonl").string(), "--images", (dir / "images.jsonl").string(),
          "--pairs", (dir / "pairs.jsonl").string()};
}

template <typename... More>
std::vector<std::string> join(std::vector<std::string> a, const More&... more) {
  (a.insert(a.end(), more.begin(), more.end()), ...);
  return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("version is machine readable") {
  const auto r = cog_run({"--version"});
  CHECK(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["name"] == "cog");
  CHECK(j["version"] == cog::cli::kVersion);
}

TEST_CASE("help and usage errors") {
  CHECK(cog_run({"--help"}).code == 0);
  const auto help = cog_run({"experiment", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--strategy") != std::string::npos);
  CHECK(cog_run({}).code == cog::cli::kExitValidation);
  CHECK(cog_run({"frobnicate"}).code == cog::cli::kExitValidation);
  CHECK(cog_run({"experiment", "--strategy", "most"}).code == cog::cli::kExitValidation);
}

TEST_CASE("ingest writes a normalized bundle and summary") {
  testing::TempDir dir;
  const auto r = cog_run(join({"ingest", "--out", dir.path().string()}, corpus_flags(fixture(""))));
  REQUIRE(r.code == 0);
  const auto summary = json::parse(r.out);
  CHECK(summary["entities"] == 5);
  CHECK(summary["blc_concepts"] == 7);
  CHECK(json::parse(slurp(dir / "summary.json")) == summary);
  std::ifstream in(dir / "entities.jsonl");
  std::string first;
  std::getline(in, first);
  CHECK(json::parse(first)["concepts"].size() == 3);
}

TEST_CASE("ingest errors") {
  testing::TempDir dir;
  auto r = cog_run({"ingest", "--out", dir.path().string(), "--entities", fixture("empty.jsonl").string(),
                    "--images", fixture("images.jsonl").string()});
  CHECK(r.code == cog::cli::kExitValidation);
  CHECK(r.err.find("no entity records") != std::string::npos);
  r = cog_run({"ingest", "--out", dir.path().string(), "--entities",
               fixture("entities_duplicate.jsonl").string(), "--images", fixture("images.jsonl").string()});
  CHECK(r.code == cog::cli::kExitValidation);
  CHECK(r.err.find(":3:") != std::string::npos);
  r = cog_run({"ingest", "--out", dir.path().string(), "--entities", fixture("entities.jsonl").string(),
               "--images", fixture("images.jsonl").string(), "--pairs", fixture("pairs_dangling.jsonl").string()});
  CHECK(r.code == cog::cli::kExitValidation);
  CHECK(r.err.find("pair #2") != std::string::npos);
}

TEST_CASE("select-longtail") {
  auto r = cog_run({"select-longtail", "--entities", fixture("entities.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
  r = cog_run({"select-longtail", "--common", "--entities", fixture("entities.jsonl").string()});
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
  r = cog_run({"select-longtail", "--threshold", "100001", "--entities", fixture("entities.jsonl").string()});
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 3);
}

TEST_CASE("synth and experiment are reproducible byte for byte") {
  testing::TempDir dir;
  const auto world = dir / "world";
  REQUIRE(cog_run({"synth", "--count", "150", "--out", world.string()}).code == 0);
  const auto run = [&](const std::string& tag, const std::string& threads) {
    return cog_run(join({"experiment", "--split", "all", "--threads", threads, "--out-report",
                         (dir / (tag + ".json")).string(), "--out-verdicts", (dir / (tag + ".jsonl")).string(),
                         "--csv", (dir / (tag + ".csv")).string()},
                        corpus_flags(world)));
  };
  REQUIRE(run("a", "1").code == 0);
  REQUIRE(run("b", "4").code == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(slurp(dir / "a.csv").rfind("Models,MR,MRR", 0) == 0);
  const auto report = json::parse(slurp(dir / "a.json"));
  CHECK(report["config"]["strategy"] == "all");
  CHECK(report["classification"]["samples"] == 300);
}

TEST_CASE("config file with flag override") {
  testing::TempDir dir;
  const auto world = dir / "world";
  REQUIRE(cog_run({"synth", "--count", "120", "--out", world.string()}).code == 0);
  std::ofstream(dir / "exp.ini") << "[experiment]\nstrategy = none\nstages = 1\nsplit = all\n";
  const auto r = cog_run(join({"--config", (dir / "exp.ini").string(), "experiment", "--stages", "1+2",
                               "--out-report", (dir / "r.json").string(), "--out-verdicts",
                               (dir / "v.jsonl").string()},
                              corpus_flags(world)));
  REQUIRE(r.code == 0);
  const auto j = json::parse(slurp(dir / "r.json"));
  CHECK(j["config"]["strategy"] == "none");
  CHECK(j["config"]["stages"] == "1+2");
  CHECK(j["config"]["split"] == "all");
}

TEST_CASE("rank and classify") {
  testing::TempDir dir;
  const auto world = dir / "world";
  REQUIRE(cog_run({"synth", "--count", "60", "--out", world.string()}).code == 0);
  const auto r = cog_run(join({"rank", "--entity-id", "ent-000002", "--candidates", "img-000001",
                               "img-000002", "img-000003", "--noise-sigma", "0"},
                              corpus_flags(world)));
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string first;
  std::getline(lines, first);
  CHECK(json::parse(first)["image_id"] == "img-000002");
  CHECK(json::parse(first)["rank"] == 1);

  const auto c = cog_run(join({"classify", "--entity-id", "ent-000001", "--image-ids", "img-000001",
                               "img-000005"},
                              corpus_flags(world)));
  REQUIRE(c.code == 0);
  std::istringstream vs(c.out);
  std::string line;
  std::getline(vs, line);
  CHECK(json::parse(line)["actual"] == true);
  std::getline(vs, line);
  CHECK(json::parse(line)["image_id"] == "img-000005");
  CHECK(json::parse(line)["actual"] == false);

  const auto missing = cog_run(join({"rank", "--entity-id", "e404", "--candidates", "img-000001"},
                                    corpus_flags(world)));
  CHECK(missing.code == cog::cli::kExitValidation);

  // the fixture corpus has an image without provenance
  const auto no_prov = cog_run(join({"rank", "--entity-id", "e1", "--candidates", "i1"},
                                    corpus_flags(fixture(""))));
  CHECK(no_prov.code == cog::cli::kExitRuntime);
}

TEST_CASE("remote scorer needs a URL") {
  const auto r = cog_run(join({"classify", "--scorer", "remote", "--entity-id", "e1", "--image-ids", "i1"},
                              corpus_flags(fixture(""))));
  CHECK(r.code == cog::cli::kExitValidation);
}

TEST_CASE("remote scorer transport failure is a runtime error") {
  const auto r = cog_run(join({"classify", "--scorer", "remote", "--scorer-url", "http://127.0.0.1:1",
                               "--scorer-retries", "0", "--scorer-timeout-ms", "300", "--entity-id", "e1",
                               "--image-ids", "i1"},
                              corpus_flags(fixture(""))));
  CHECK(r.code == cog::cli::kExitRuntime);
}

TEST_CASE("loss-check exit codes") {
  auto r = cog_run({"loss-check", fixture("batch_single_cell.json").string()});
  CHECK(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["result"] == "pass");
  CHECK(j["total_loss"].get<double>() == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(cog_run({"loss-check", fixture("batch_perfect.json").string()}).code == 0);
  CHECK(cog_run({"loss-check", fixture("batch_mixed.json").string()}).code == 0);
  CHECK(cog_run({"loss-check", fixture("batch_mismatch.json").string()}).code == cog::cli::kExitValidation);

  testing::TempDir dir;
  auto wrong = json::parse(slurp(fixture("batch_single_cell.json")));
  wrong["expected"]["total_loss"] = 0.7;
  std::ofstream(dir / "wrong.json") << wrong.dump();
  r = cog_run({"loss-check", (dir / "wrong.json").string()});
  CHECK(r.code == cog::cli::kExitValidation);
  CHECK(json::parse(r.out)["result"] == "fail");
}

TEST_CASE("serve fails fast on a missing corpus") {
  const auto r = cog_run({"serve", "--entities", "/nonexistent/e.jsonl", "--images", "/nonexistent/i.jsonl",
                          "--port", "0"});
  CHECK(r.code == cog::cli::kExitValidation);
}

}
