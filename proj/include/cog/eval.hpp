#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cog/corpus.hpp"
#include "cog/fusion.hpp"
#include "cog/scorer.hpp"

namespace cog {

inline constexpr std::size_t kCandidatesPerInstance = 50;

struct RankingInstance {
  std::string entity_id;
  std::vector<std::string> candidates;  // image ids, distinct
  std::string positive_id;
};

struct RankingMetrics {
  std::size_t instances = 0;
  double mr = 0.0;
  double mrr = 0.0;
  std::map<int, double> hit_at;  // k -> fraction with rank <= k

  bool operator==(const RankingMetrics&) const = default;
};

struct ClassificationMetrics {
  std::size_t samples = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const ClassificationMetrics&) const = default;
};

// Values stay in [0, 1] internally; percent scaling happens on output.
struct EvalReport {
  std::optional<RankingMetrics> ranking;
  std::optional<ClassificationMetrics> classification;

  bool operator==(const EvalReport&) const = default;
};

// A verdict plus the ground truth it is scored against.
struct LabeledVerdict {
  GroundingVerdict verdict;
  bool actual = false;

  bool operator==(const LabeledVerdict&) const = default;
};

// One positive plus 49 seeded-random negatives per pair. Negatives are
// images whose source entity differs from the pair's entity; images
// without provenance qualify when no positive pair links them to it.
// Throws InsufficientNegativesError.
std::vector<RankingInstance> build_ranking_instances(const Corpus& corpus,
                                                     std::span<const PairRecord> positives,
                                                     std::uint64_t seed,
                                                     std::size_t candidates = kCandidatesPerInstance);

// Positives followed by one swapped-image negative per positive.
std::vector<PairRecord> build_classification_set(std::span<const PairRecord> positives,
                                                 const Corpus& corpus, std::uint64_t seed);

// Ranker: full ordering of an instance's candidate ids, best first.
using Ranker = std::function<std::vector<std::string>(const RankingInstance&)>;

// 1-based rank of each instance's positive. Throws ValidationError when the
// ranker drops it.
std::vector<std::size_t> positive_ranks(std::span<const RankingInstance> instances,
                                        const Ranker& ranker);

RankingMetrics ranking_metrics_from_ranks(std::span<const std::size_t> ranks,
                                          std::span<const int> ks = std::array{1, 5, 10});

RankingMetrics ranking_metrics(std::span<const RankingInstance> instances, const Ranker& ranker);

struct Outcome {
  bool predicted = false;
  bool actual = false;
};

// Throws EmptyInputError. Precision is 0 without positive predictions and
// F1 is 0 when precision and recall are both 0.
ClassificationMetrics classification_metrics(std::span<const Outcome> outcomes);

ClassificationMetrics classification_metrics(std::span<const LabeledVerdict> verdicts);

enum class SplitChoice { Train, Validation, Test, All };
SplitChoice parse_split(std::string_view s);
std::string_view to_string(SplitChoice s);

struct ExperimentConfig {
  ConceptStrategy strategy = ConceptStrategy::All;
  StageConfig stages;
  std::uint64_t seed = 42;
  SplitChoice split = SplitChoice::Test;
  bool ranking = true;
  bool classification = true;
};

struct ExperimentResult {
  EvalReport report;
  std::vector<LabeledVerdict> verdicts;
};

// Splits the corpus's positive pairs 8:1:1, evaluates the chosen split with
// the ranking and classification protocols, and returns per-pair verdicts.
// Concept statistics come from the evaluated split's entities.
ExperimentResult run_experiment(const Corpus& corpus, const Scorer& scorer,
                                const ExperimentConfig& config);

// Rounds to `decimals` places, ties to even.
double round_half_even(double value, int decimals);

}  // namespace cog
