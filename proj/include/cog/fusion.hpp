#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cog/corpus.hpp"
#include "cog/scorer.hpp"

namespace cog {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr int kDefaultLogBase = 10;

struct EvidenceItem {
  std::string concept_text;
  double p_e = 0.0;           // P(E_i): match probability of image and concept
  double contribution = 0.0;  // Con(E_i, H)
  double weighted = 0.0;      // p_e * contribution

  bool operator==(const EvidenceItem&) const = default;
};

struct GroundingVerdict {
  std::string entity_id;
  std::string image_id;
  double stage1_prediction = 0.0;
  bool stage1_accept = false;
  std::vector<EvidenceItem> evidence;  // empty unless stage 2 ran
  std::optional<double> p_h;
  std::optional<bool> stage2_accept;
  bool final_label = false;

  bool operator==(const GroundingVerdict&) const = default;
};

struct StageConfig {
  double stage1_threshold = kDefaultThreshold;
  double stage2_threshold = kDefaultThreshold;
  int log_base = kDefaultLogBase;
  bool run_stage2 = true;
  std::size_t threads = 1;

  void validate() const;
};

// "Jay Chou, singer, actor, director": name then concepts, comma-space joined.
std::string concat_text(std::string_view entity_name, std::span<const std::string> concepts);

struct Stage1Result {
  double prediction = 0.0;
  bool accept = false;
};

// Concept integration: scores the entity name joined with its selected
// concepts and accepts at prediction >= threshold.
Stage1Result stage1(const EntityRecord& entity, const ImageRef& image, const Scorer& scorer,
                    ConceptStrategy strategy, double threshold);

// Contribution of a concept carried by `num` of `ents` entities:
//   1                                            if num < log_base
//   (1/log_b(num) - 1/ents) / (1 - 1/ents)       otherwise
// Throws DomainError unless 1 <= num <= ents, ents >= 2 and log_base >= 2.
double contribution(std::uint64_t num, std::uint64_t ents, int log_base = kDefaultLogBase);

struct FusionResult {
  std::vector<EvidenceItem> evidence;
  double p_h = 0.0;
  bool accept = false;
};

// Combines per-concept evidence into P(H), the contribution-weighted mean
// of P(E_i), summed in concept-list order.
// Throws EmptyInputError without concepts, UnknownConceptError for a
// concept missing from stats.
FusionResult fuse_evidence(std::span<const std::string> concepts, std::span<const double> p_e,
                           const ConceptStats& stats, double threshold,
                           int log_base = kDefaultLogBase);

// Scores each selected concept (bare concept text) against the image and
// fuses the results.
FusionResult evidence_fusion(const EntityRecord& entity, const ImageRef& image,
                             const Scorer& scorer, const ConceptStats& stats,
                             ConceptStrategy strategy, double threshold,
                             int log_base = kDefaultLogBase, std::size_t threads = 1);

// Stage 1, then stage 2 for stage-1 rejections that have concepts.
GroundingVerdict ground_pair(const EntityRecord& entity, const ImageRef& image,
                             const Scorer& scorer, const ConceptStats& stats,
                             ConceptStrategy strategy, const StageConfig& config = {});

struct RankedCandidate {
  ImageRef image;
  double prediction = 0.0;
};

// Stage-1 ranking: prediction descending, ties by image id ascending.
std::vector<RankedCandidate> rank_candidates(const EntityRecord& entity,
                                             std::span<const ImageRef> candidates,
                                             const Scorer& scorer, ConceptStrategy strategy,
                                             std::size_t threads = 1);

}  // namespace cog
