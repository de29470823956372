#include "cog/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "cog/error.hpp"
#include "cog/random.hpp"
#include "cog/text.hpp"

namespace cog {

namespace {

// Image selection rule shared by both negative samplers.
class NegativePool {
 public:
  NegativePool(const Corpus& corpus, std::span<const PairRecord> positives) : corpus_(corpus) {
    for (const auto& p : corpus.pairs()) {
      if (p.label) linked_.insert(key(p.entity_id, p.image_id));
    }
    for (const auto& p : positives) linked_.insert(key(p.entity_id, p.image_id));
  }

  bool eligible(const std::string& entity_id, const ImageRef& image) const {
    if (image.source_entity_id) return *image.source_entity_id != entity_id;
    return !linked_.contains(key(entity_id, image.id));
  }

  std::vector<std::size_t> eligible_indices(const std::string& entity_id,
                                            std::string_view exclude_image) const {
    std::vector<std::size_t> out;
    const auto images = corpus_.images();
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].id != exclude_image && eligible(entity_id, images[i])) out.push_back(i);
    }
    return out;
  }

 private:
  static std::string key(std::string_view e, std::string_view i) {
    return std::string(e) + '\x1f' + std::string(i);
  }

  const Corpus& corpus_;
  std::unordered_set<std::string> linked_;
};

}  // namespace

std::vector<RankingInstance> build_ranking_instances(const Corpus& corpus,
                                                     std::span<const PairRecord> positives,
                                                     std::uint64_t seed, std::size_t candidates) {
  if (candidates < 2) throw ValidationError("a ranking instance needs at least 2 candidates");
  const std::size_t negatives = candidates - 1;
  if (corpus.images().size() < candidates) {
    throw InsufficientNegativesError("corpus has " + std::to_string(corpus.images().size()) +
                                     " images; ranking needs at least " +
                                     std::to_string(candidates));
  }
  NegativePool pool(corpus, positives);
  Rng rng(seed);
  std::vector<RankingInstance> out;
  out.reserve(positives.size());
  for (const auto& p : positives) {
    corpus.entity(p.entity_id);
    corpus.image(p.image_id);
    auto idx = pool.eligible_indices(p.entity_id, p.image_id);
    if (idx.size() < negatives) {
      throw InsufficientNegativesError("entity \"" + p.entity_id + "\" has only " +
                                       std::to_string(idx.size()) + " eligible negatives, needs " +
                                       std::to_string(negatives));
    }
    // Partial Fisher-Yates: the first `negatives` slots become the sample.
    for (std::size_t i = 0; i < negatives; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    RankingInstance inst;
    inst.entity_id = p.entity_id;
    inst.positive_id = p.image_id;
    inst.candidates.reserve(candidates);
    inst.candidates.push_back(p.image_id);
    for (std::size_t i = 0; i < negatives; ++i) inst.candidates.push_back(corpus.images()[idx[i]].id);
    shuffle(std::span(inst.candidates), rng);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<PairRecord> build_classification_set(std::span<const PairRecord> positives,
                                                 const Corpus& corpus, std::uint64_t seed) {
  std::set<std::string_view> sources;
  bool unknown_source = false;
  for (const auto& img : corpus.images()) {
    if (img.source_entity_id) {
      sources.insert(*img.source_entity_id);
    } else {
      unknown_source = true;
    }
  }
  if (sources.size() < 2 && !unknown_source) {
    throw InsufficientNegativesError("negative sampling needs images of at least 2 entities");
  }
  NegativePool pool(corpus, positives);
  Rng rng(seed);
  std::vector<PairRecord> out(positives.begin(), positives.end());
  out.reserve(2 * positives.size());
  for (const auto& p : positives) {
    const auto idx = pool.eligible_indices(p.entity_id, p.image_id);
    if (idx.empty()) {
      throw InsufficientNegativesError("no image from a different entity for \"" + p.entity_id + "\"");
    }
    const auto pick = idx[uniform_index(rng, idx.size())];
    out.push_back(PairRecord{p.entity_id, corpus.images()[pick].id, false});
  }
  return out;
}

std::vector<std::size_t> positive_ranks(std::span<const RankingInstance> instances,
                                        const Ranker& ranker) {
  std::vector<std::size_t> ranks;
  ranks.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto order = ranker(inst);
    if (order.size() != inst.candidates.size()) {
      throw ValidationError("ranker returned " + std::to_string(order.size()) + " of " +
                            std::to_string(inst.candidates.size()) + " candidates for \"" +
                            inst.entity_id + "\"");
    }
    const auto it = std::find(order.begin(), order.end(), inst.positive_id);
    if (it == order.end()) {
      throw ValidationError("ranker dropped the positive \"" + inst.positive_id + "\" for \"" +
                            inst.entity_id + "\"");
    }
    ranks.push_back(static_cast<std::size_t>(it - order.begin()) + 1);
  }
  return ranks;
}

RankingMetrics ranking_metrics_from_ranks(std::span<const std::size_t> ranks,
                                          std::span<const int> ks) {
  if (ranks.empty()) throw EmptyInputError("ranking metrics need at least one instance");
  RankingMetrics m;
  m.instances = ranks.size();
  double rank_sum = 0.0;
  double rr_sum = 0.0;
  std::map<int, std::size_t> hits;
  for (const int k : ks) hits[k] = 0;
  for (const auto r : ranks) {
    if (r == 0) throw ValidationError("ranks are 1-based");
    rank_sum += static_cast<double>(r);
    rr_sum += 1.0 / static_cast<double>(r);
    for (auto& [k, count] : hits) {
      if (r <= static_cast<std::size_t>(k)) ++count;
    }
  }
  const double n = static_cast<double>(ranks.size());
  m.mr = rank_sum / n;
  m.mrr = rr_sum / n;
  for (const auto& [k, count] : hits) m.hit_at[k] = static_cast<double>(count) / n;
  return m;
}

RankingMetrics ranking_metrics(std::span<const RankingInstance> instances, const Ranker& ranker) {
  const auto ranks = positive_ranks(instances, ranker);
  return ranking_metrics_from_ranks(ranks);
}

ClassificationMetrics classification_metrics(std::span<const Outcome> outcomes) {
  if (outcomes.empty()) throw EmptyInputError("classification metrics need at least one verdict");
  ClassificationMetrics m;
  m.samples = outcomes.size();
  for (const auto& o : outcomes) {
    if (o.predicted && o.actual) ++m.tp;
    else if (o.predicted) ++m.fp;
    else if (o.actual) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(m.tp + m.tn, m.samples);
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = (m.precision + m.recall) == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

ClassificationMetrics classification_metrics(std::span<const LabeledVerdict> verdicts) {
  std::vector<Outcome> outcomes;
  outcomes.reserve(verdicts.size());
  for (const auto& v : verdicts) outcomes.push_back({v.verdict.final_label, v.actual});
  return classification_metrics(outcomes);
}

SplitChoice parse_split(std::string_view s) {
  const auto lower = text::ascii_lower(s);
  if (lower == "train") return SplitChoice::Train;
  if (lower == "validation" || lower == "val") return SplitChoice::Validation;
  if (lower == "test") return SplitChoice::Test;
  if (lower == "all") return SplitChoice::All;
  throw ValidationError("unknown split '" + std::string(s) + "' (expected train|validation|test|all)");
}

std::string_view to_string(SplitChoice s) {
  switch (s) {
    case SplitChoice::Train: return "train";
    case SplitChoice::Validation: return "validation";
    case SplitChoice::Test: return "test";
    case SplitChoice::All: return "all";
  }
  return "test";
}

ExperimentResult run_experiment(const Corpus& corpus, const Scorer& scorer,
                                const ExperimentConfig& config) {
  config.stages.validate();
  const auto positives = corpus.positive_pairs();
  if (positives.empty()) throw EmptyInputError("corpus has no positive pairs to evaluate");

  std::vector<PairRecord> eval_pairs;
  if (config.split == SplitChoice::All) {
    eval_pairs = positives;
  } else {
    auto split = split_dataset(positives, config.seed);
    eval_pairs = config.split == SplitChoice::Train        ? std::move(split.train)
                 : config.split == SplitChoice::Validation ? std::move(split.validation)
                                                           : std::move(split.test);
  }
  if (eval_pairs.empty()) throw EmptyInputError("selected split is empty");

  // Contribution statistics describe the evaluated entities only.
  std::vector<EntityRecord> split_entities;
  std::unordered_set<std::string_view> seen;
  for (const auto& p : eval_pairs) {
    if (seen.insert(p.entity_id).second) split_entities.push_back(corpus.entity(p.entity_id));
  }
  const auto stats = compute_concept_stats(split_entities);
  const std::size_t threads = std::max<std::size_t>(config.stages.threads, 1);

  ExperimentResult result;
  if (config.ranking) {
    // Independent streams so enabling one protocol never perturbs the other.
    const auto instances = build_ranking_instances(corpus, eval_pairs, splitmix64(config.seed ^ 1));
    std::vector<std::size_t> ranks(instances.size());
    parallel_for(instances.size(), threads, [&](std::size_t i) {
      const auto& inst = instances[i];
      std::vector<ImageRef> candidates;
      candidates.reserve(inst.candidates.size());
      for (const auto& id : inst.candidates) candidates.push_back(corpus.image(id));
      const auto ranked = rank_candidates(corpus.entity(inst.entity_id), candidates, scorer,
                                          config.strategy);
      const auto it = std::find_if(ranked.begin(), ranked.end(), [&](const RankedCandidate& c) {
        return c.image.id == inst.positive_id;
      });
      ranks[i] = static_cast<std::size_t>(it - ranked.begin()) + 1;
    });
    result.report.ranking = ranking_metrics_from_ranks(ranks);
  }

  if (config.classification) {
    const auto samples = build_classification_set(eval_pairs, corpus, splitmix64(config.seed ^ 2));
    StageConfig stage_config = config.stages;
    stage_config.threads = 1;
    result.verdicts.resize(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
      const auto& s = samples[i];
      result.verdicts[i] = LabeledVerdict{
          ground_pair(corpus.entity(s.entity_id), corpus.image(s.image_id), scorer, stats,
                      config.strategy, stage_config),
          s.label};
    });
    result.report.classification = classification_metrics(std::span<const LabeledVerdict>(result.verdicts));
  }
  return result;
}

double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::nearbyint(value * scale) / scale;
}

}  // namespace cog
