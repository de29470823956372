#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cog/corpus.hpp"
#include "cog/scorer.hpp"

namespace cog {

// Parameters of the desk-scale oracle world.
struct SyntheticWorldConfig {
  std::uint64_t seed = 42;
  double noise_sigma = 0.5;
  double name_weight = 1.5;
  double concept_weight = 4.0;
  double bias = 2.0;
  // Fraction of each entity's concepts drawn from the shared head of the
  // concept vocabulary; higher values make distractor images overlap more.
  double distractor_overlap = 0.5;

  void validate() const;
};

// Deterministic stand-in for a fine-tuned vision-language model.
//
//   logit = name_weight * J(text, name tokens of the image's source entity)
//         + concept_weight * J(text, concept tokens of that entity)
//         - bias + noise_sigma * N(0, 1)
//
// J is Jaccard similarity over lowercased word tokens; the normal deviate is
// derived from a hash of (text, image id, seed), so results do not depend on
// call order or threading.
class SyntheticScorer final : public Scorer {
 public:
  // Throws MissingProvenanceError unless every image names a known source
  // entity.
  SyntheticScorer(const Corpus& corpus, SyntheticWorldConfig config);

  ScoreResult score(const ScoreRequest& request) const override;

  // Noise-free logit, exposed for tests.
  double logit(const ScoreRequest& request) const;

  const SyntheticWorldConfig& config() const { return config_; }

 private:
  struct Latent {
    std::vector<std::string> name_tokens;     // sorted, unique
    std::vector<std::string> concept_tokens;  // sorted, unique
  };

  const Latent& latent_for(const ImageRef& image) const;

  SyntheticWorldConfig config_;
  std::unordered_map<std::string, Latent> latents_;  // by image id
};

// Sorted-unique token set and the Jaccard index over two such sets.
std::vector<std::string> token_set(std::string_view s);
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct SyntheticCorpusOptions {
  std::size_t entity_count = 1000;
  std::size_t min_concepts = 2;
  std::size_t max_concepts = 6;
  // Probability that a concept slot holds a single-word concept.
  double blc_probability = 0.6;
  // Pareto tail index and scale for viewtimes.
  double viewtimes_alpha = 0.35;
  double viewtimes_scale = 500.0;
};

// Entities with power-law viewtimes, 2-6 concepts each and exactly one
// image with provenance, plus one positive pair per entity.
Corpus generate_synthetic_corpus(const SyntheticCorpusOptions& options,
                                 const SyntheticWorldConfig& config);

}  // namespace cog
