#include "cog/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "cog/contrastive.hpp"
#include "cog/corpus.hpp"
#include "cog/error.hpp"
#include "cog/eval.hpp"
#include "cog/fusion.hpp"
#include "cog/http_api.hpp"
#include "cog/remote_scorer.hpp"
#include "cog/serialize.hpp"
#include "cog/service.hpp"
#include "cog/synthetic.hpp"

namespace cog::cli {

namespace fs = std::filesystem;

namespace {

struct CorpusArgs {
  std::string entities;
  std::string images;
  std::string pairs;

  void add_to(CLI::App& cmd, bool images_required = true) {
    cmd.add_option("--entities", entities, "entities.jsonl")->required();
    auto* img = cmd.add_option("--images", images, "images.jsonl");
    if (images_required) img->required();
    cmd.add_option("--pairs", pairs, "pairs.jsonl (optional)");
  }

  Corpus load() const {
    std::optional<fs::path> p;
    if (!pairs.empty()) p = pairs;
    return load_corpus(entities, images, p);
  }
};

struct ScorerArgs {
  std::string mode = "synthetic";
  std::string url;
  long timeout_ms = 10'000;
  std::size_t retries = 2;
  SyntheticWorldConfig world;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--scorer", mode, "synthetic | remote")
        ->check(CLI::IsMember({"synthetic", "remote"}))
        ->capture_default_str();
    cmd.add_option("--scorer-url", url, "remote model service base URL")->envname("COG_SCORER_URL");
    cmd.add_option("--scorer-timeout-ms", timeout_ms, "remote scorer timeout")
        ->envname("COG_SCORER_TIMEOUT_MS")
        ->capture_default_str();
    cmd.add_option("--scorer-retries", retries, "extra attempts after a transport failure")
        ->envname("COG_SCORER_RETRIES")
        ->capture_default_str();
    cmd.add_option("--world-seed", world.seed, "synthetic scorer noise seed")->capture_default_str();
    cmd.add_option("--noise-sigma", world.noise_sigma)->capture_default_str();
    cmd.add_option("--name-weight", world.name_weight)->capture_default_str();
    cmd.add_option("--concept-weight", world.concept_weight)->capture_default_str();
    cmd.add_option("--bias", world.bias)->capture_default_str();
  }

  std::shared_ptr<const Scorer> make(const Corpus& corpus) const {
    if (mode == "remote") {
      if (url.empty()) throw ValidationError("--scorer remote needs --scorer-url or COG_SCORER_URL");
      if (timeout_ms <= 0) throw ValidationError("--scorer-timeout-ms must be positive");
      auto remote = std::make_shared<RemoteScorer>(
          RemoteScorerOptions{url, std::chrono::milliseconds(timeout_ms), retries, 256});
      return std::make_shared<CachingScorer>(std::move(remote));
    }
    return std::make_shared<SyntheticScorer>(corpus, world);
  }
};

struct StageArgs {
  std::string strategy = "all";
  std::string stages = "1+2";
  double threshold = kDefaultThreshold;
  std::optional<double> stage2_threshold;
  int log_base = kDefaultLogBase;
  std::size_t threads = default_thread_count();

  void add_to(CLI::App& cmd) {
    cmd.add_option("--strategy", strategy, "concept selection: none | blc | all")
        ->check(CLI::IsMember({"none", "blc", "all"}, CLI::ignore_case))
        ->capture_default_str();
    cmd.add_option("--stages", stages, "1 | 1+2")
        ->check(CLI::IsMember({"1", "1+2"}))
        ->capture_default_str();
    cmd.add_option("--threshold", threshold, "stage-1 acceptance threshold")->capture_default_str();
    cmd.add_option("--stage2-threshold", stage2_threshold,
                   "stage-2 threshold (defaults to --threshold)");
    cmd.add_option("--log-base", log_base, "log base of the contribution weight")->capture_default_str();
    cmd.add_option("--threads", threads, "worker threads; results do not depend on it")
        ->capture_default_str();
  }

  ConceptStrategy concept_strategy() const { return parse_strategy(strategy); }

  StageConfig stage_config() const {
    StageConfig c;
    c.stage1_threshold = threshold;
    c.stage2_threshold = stage2_threshold.value_or(threshold);
    c.log_base = log_base;
    c.run_stage2 = stages == "1+2";
    c.threads = std::max<std::size_t>(threads, 1);
    c.validate();
    return c;
  }
};

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

template <typename Range>
std::vector<Json> as_json(const Range& items) {
  std::vector<Json> out;
  for (const auto& item : items) out.push_back(to_json(item));
  return out;
}

// --- ingest ---------------------------------------------------------------

struct IngestCmd {
  CorpusArgs corpus;
  std::string out_dir;

  int run(std::ostream& out) const {
    const auto c = corpus.load();
    if (c.entities().empty()) throw ValidationError(corpus.entities + ": no entity records");
    if (c.images().empty()) throw ValidationError(corpus.images + ": no image records");
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_jsonl(dir / "entities.jsonl", as_json(c.entities()));
    write_jsonl(dir / "images.jsonl", as_json(c.images()));
    if (!c.pairs().empty()) write_jsonl(dir / "pairs.jsonl", as_json(c.pairs()));
    const auto summary = to_json(summarize(c));
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    out << summary.dump(2) << "\n";
    return kExitOk;
  }
};

// --- select-longtail --------------------------------------------------------

struct SelectCmd {
  std::string entities;
  std::optional<std::uint64_t> threshold;
  bool common = false;
  std::string out_path;

  int run(std::ostream& out) const {
    const auto corpus = Corpus::build(load_entities(entities), {});
    const auto selected = common ? select_common(corpus, threshold.value_or(kCommonThreshold))
                                 : select_long_tailed(corpus, threshold.value_or(kLongTailThreshold));
    const auto records = as_json(selected);
    if (out_path.empty()) {
      for (const auto& r : records) out << r.dump() << "\n";
    } else {
      write_jsonl(out_path, records);
      out << selected.size() << " of " << corpus.entities().size() << " entities selected\n";
    }
    return kExitOk;
  }
};

// --- synth -------------------------------------------------------------------

struct SynthCmd {
  SyntheticCorpusOptions options;
  SyntheticWorldConfig world;
  std::string out_dir;

  int run(std::ostream& out) const {
    const auto c = generate_synthetic_corpus(options, world);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_jsonl(dir / "entities.jsonl", as_json(c.entities()));
    write_jsonl(dir / "images.jsonl", as_json(c.images()));
    write_jsonl(dir / "pairs.jsonl", as_json(c.pairs()));
    out << to_json(summarize(c)).dump(2) << "\n";
    return kExitOk;
  }
};

// --- experiment --------------------------------------------------------------

struct ExperimentCmd {
  CorpusArgs corpus;
  ScorerArgs scorer;
  StageArgs stages;
  std::uint64_t seed = 42;
  std::string split = "test";
  std::string out_report = "report.json";
  std::string out_verdicts = "verdicts.jsonl";
  std::string csv;
  std::string label;

  int run(std::ostream& out) const {
    const auto c = corpus.load();
    const auto s = scorer.make(c);
    ExperimentConfig config;
    config.strategy = stages.concept_strategy();
    config.stages = stages.stage_config();
    config.seed = seed;
    config.split = parse_split(split);
    const auto result = run_experiment(c, *s, config);

    Json report = report_to_json(result.report);
    report["config"] = Json{{"strategy", to_string(config.strategy)},
                            {"stages", stages.stages},
                            {"threshold", config.stages.stage1_threshold},
                            {"stage2_threshold", config.stages.stage2_threshold},
                            {"log_base", config.stages.log_base},
                            {"seed", seed},
                            {"split", to_string(config.split)},
                            {"scorer", scorer.mode}};
    write_text(out_report, report.dump(2) + "\n");
    std::vector<Json> verdicts;
    for (const auto& lv : result.verdicts) {
      auto j = to_json(lv.verdict);
      j["actual"] = lv.actual;
      verdicts.push_back(std::move(j));
    }
    write_jsonl(out_verdicts, verdicts);
    if (!csv.empty()) {
      const auto row = label.empty() ? std::string(to_string(config.strategy)) + " stage" + stages.stages
                                     : label;
      write_text(csv, report_to_csv(result.report, row));
    }
    out << report.dump(2) << "\n";
    return kExitOk;
  }
};

// --- rank / classify ---------------------------------------------------------

struct RankCmd {
  CorpusArgs corpus;
  ScorerArgs scorer;
  StageArgs stages;
  std::string entity_id;
  std::vector<std::string> candidates;

  int run(std::ostream& out) const {
    const auto c = corpus.load();
    const auto s = scorer.make(c);
    std::vector<ImageRef> images;
    for (const auto& id : candidates) images.push_back(c.image(id));
    const auto ranked = rank_candidates(c.entity(entity_id), images, *s,
                                        stages.concept_strategy(), std::max<std::size_t>(stages.threads, 1));
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      out << Json{{"rank", i + 1}, {"image_id", ranked[i].image.id}, {"prediction", ranked[i].prediction}}
                 .dump()
          << "\n";
    }
    return kExitOk;
  }
};

struct ClassifyCmd {
  CorpusArgs corpus;
  ScorerArgs scorer;
  StageArgs stages;
  std::string entity_id;
  std::vector<std::string> image_ids;
  std::string out_path;

  int run(std::ostream& out) const {
    const auto c = corpus.load();
    const auto s = scorer.make(c);
    const auto stats = compute_concept_stats(c.entities());
    const auto config = stages.stage_config();
    const auto& entity = c.entity(entity_id);
    std::vector<Json> records;
    for (const auto& id : image_ids) {
      auto j = to_json(ground_pair(entity, c.image(id), *s, stats, stages.concept_strategy(), config));
      if (const auto truth = c.truth(entity_id, id)) j["actual"] = *truth;
      records.push_back(std::move(j));
    }
    if (out_path.empty()) {
      for (const auto& r : records) out << r.dump() << "\n";
    } else {
      write_jsonl(out_path, records);
    }
    return kExitOk;
  }
};

// --- loss-check --------------------------------------------------------------

struct LossCheckCmd {
  std::string fixture;
  double tolerance = 1e-9;

  int run(std::ostream& out) const {
    const auto f = load_batch_fixture(fixture);
    const auto losses = contrastive::compute_losses(f.spec);
    double max_dev = 0.0;
    std::size_t compared = 0;
    Json j{{"fixture", fixture},
           {"batch_size", f.spec.batch_size()},
           {"entity_loss", losses.entity},
           {"concept_loss", losses.concept_total},
           {"total_loss", losses.total},
           {"entity_loss_mean", losses.entity_mean},
           {"concept_loss_mean", losses.concept_mean}};
    const auto compare = [&](const std::optional<double>& expected, double actual) {
      if (!expected) return;
      max_dev = std::max(max_dev, std::abs(*expected - actual));
      ++compared;
    };
    compare(f.expected_entity, losses.entity);
    compare(f.expected_concept, losses.concept_total);
    compare(f.expected_total, losses.total);
    const bool pass = max_dev <= tolerance;
    j["compared"] = compared;
    j["max_abs_deviation"] = max_dev;
    j["tolerance"] = tolerance;
    j["result"] = pass ? "pass" : "fail";
    out << j.dump(2) << "\n";
    return pass ? kExitOk : kExitValidation;
  }
};

// --- serve -------------------------------------------------------------------

struct ServeCmd {
  CorpusArgs corpus;
  ScorerArgs scorer;
  StageArgs stages;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_path = "decisions.log";
  std::string api_token;
  std::string ui_dir;

  int run(std::ostream& out) const {
    auto c = corpus.load();
    auto s = scorer.make(c);
    ServiceConfig config;
    config.strategy = stages.concept_strategy();
    config.stages = stages.stage_config();
    config.log_path = log_path;
    GroundingService service(std::move(c), std::move(s), config);

    // Block termination signals before the server threads exist so only
    // sigwait below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    HttpOptions http;
    if (!api_token.empty()) http.api_token = api_token;
    if (!ui_dir.empty()) http.ui_dir = ui_dir;
    HttpServer server(service, http);
    const int bound = server.start(host, port);
    out << Json{{"listening", host + ":" + std::to_string(bound)}, {"log", log_path}}.dump() << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    server.wait();
    out << Json{{"shutdown", sig == SIGTERM ? "SIGTERM" : "SIGINT"}}.dump() << std::endl;
    return kExitOk;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept-guided entity grounding for multi-modal knowledge graphs", "cog"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value config file; flags override it");
  app.set_version_flag("--version",
                       std::string(R"({"name":"cog","version":")") + kVersion + R"("})");

  IngestCmd ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "validate a corpus and write a normalized bundle")->configurable();
  ingest.corpus.add_to(*ingest_cmd);
  ingest_cmd->add_option("--out", ingest.out_dir, "output directory")->required();

  SelectCmd select;
  auto* select_cmd = app.add_subcommand("select-longtail", "filter entities by viewtimes")->configurable();
  select_cmd->add_option("--entities", select.entities, "entities.jsonl")->required();
  select_cmd->add_option("--threshold", select.threshold,
                         "strict bound (default 100000, or 1000000 with --common)");
  select_cmd->add_flag("--common", select.common, "keep entities with viewtimes above the threshold");
  select_cmd->add_option("--out", select.out_path, "output JSONL (default stdout)");

  SynthCmd synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with provenance")->configurable();
  synth_cmd->add_option("--count", synth.options.entity_count, "number of entities")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.world.seed)->capture_default_str();
  synth_cmd->add_option("--distractor-overlap", synth.world.distractor_overlap)->capture_default_str();
  synth_cmd->add_option("--blc-probability", synth.options.blc_probability)->capture_default_str();
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();

  ExperimentCmd experiment;
  auto* exp_cmd = app.add_subcommand("experiment", "run the ranking and classification protocols")->configurable();
  experiment.corpus.add_to(*exp_cmd);
  experiment.scorer.add_to(*exp_cmd);
  experiment.stages.add_to(*exp_cmd);
  exp_cmd->add_option("--seed", experiment.seed, "split and sampling seed")->capture_default_str();
  exp_cmd->add_option("--split", experiment.split, "train | validation | test | all")
      ->capture_default_str();
  exp_cmd->add_option("--out-report", experiment.out_report)->capture_default_str();
  exp_cmd->add_option("--out-verdicts", experiment.out_verdicts)->capture_default_str();
  exp_cmd->add_option("--csv", experiment.csv, "also write a table-layout CSV");
  exp_cmd->add_option("--label", experiment.label, "row label for the CSV");

  RankCmd rank;
  auto* rank_cmd = app.add_subcommand("rank", "rank candidate images for an entity (stage 1)")->configurable();
  rank.corpus.add_to(*rank_cmd);
  rank.scorer.add_to(*rank_cmd);
  rank.stages.add_to(*rank_cmd);
  rank_cmd->add_option("--entity-id", rank.entity_id)->required();
  rank_cmd->add_option("--candidates", rank.candidates, "candidate image ids")->required();

  ClassifyCmd classify;
  auto* classify_cmd = app.add_subcommand("classify", "ground (entity, image) pairs with both stages")->configurable();
  classify.corpus.add_to(*classify_cmd);
  classify.scorer.add_to(*classify_cmd);
  classify.stages.add_to(*classify_cmd);
  classify_cmd->add_option("--entity-id", classify.entity_id)->required();
  classify_cmd->add_option("--image-ids", classify.image_ids)->required();
  classify_cmd->add_option("--out", classify.out_path, "verdicts.jsonl (default stdout)");

  LossCheckCmd loss;
  auto* loss_cmd = app.add_subcommand("loss-check", "check contrastive losses against a fixture")->configurable();
  loss_cmd->add_option("fixture", loss.fixture, "batch.json")->required();
  loss_cmd->add_option("--tolerance", loss.tolerance)->capture_default_str();

  ServeCmd serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the grounding and verification service")->configurable();
  serve.corpus.add_to(*serve_cmd);
  serve.scorer.add_to(*serve_cmd);
  serve.stages.add_to(*serve_cmd);
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--log", serve.log_path, "append-only decision log")->capture_default_str();
  serve_cmd->add_option("--api-token", serve.api_token)->envname("COG_API_TOKEN");
  serve_cmd->add_option("--ui-dir", serve.ui_dir, "static verification UI served under /ui/");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (*ingest_cmd) return ingest.run(out);
    if (*select_cmd) return select.run(out);
    if (*synth_cmd) return synth.run(out);
    if (*exp_cmd) return experiment.run(out);
    if (*rank_cmd) return rank.run(out);
    if (*classify_cmd) return classify.run(out);
    if (*loss_cmd) return loss.run(out);
    if (*serve_cmd) return serve.run(out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cog"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cog::cli
