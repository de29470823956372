#include "cog/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "cog/error.hpp"

namespace cog {

void StageConfig::validate() const {
  const auto in_open_unit = [](double t) { return t > 0.0 && t < 1.0; };
  if (!in_open_unit(stage1_threshold) || !in_open_unit(stage2_threshold)) {
    throw ValidationError("thresholds must lie in (0, 1)");
  }
  if (log_base < 2) throw ValidationError("log_base must be >= 2");
}

std::string concat_text(std::string_view entity_name, std::span<const std::string> concepts) {
  std::string out(entity_name);
  for (const auto& c : concepts) {
    out += ", ";
    out += c;
  }
  return out;
}

Stage1Result stage1(const EntityRecord& entity, const ImageRef& image, const Scorer& scorer,
                    ConceptStrategy strategy, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
  const auto concepts = select_concepts(entity, strategy);
  const auto result = scorer.score(ScoreRequest{concat_text(entity.name, concepts), image});
  return {result.prediction, result.prediction >= threshold};
}

double contribution(std::uint64_t num, std::uint64_t ents, int log_base) {
  if (log_base < 2) throw DomainError("log_base must be >= 2");
  if (ents < 2) throw DomainError("contribution needs ents >= 2");
  if (num < 1 || num > ents) {
    throw DomainError("concept count " + std::to_string(num) + " outside [1, " +
                      std::to_string(ents) + "]");
  }
  const auto base = static_cast<std::uint64_t>(log_base);
  if (num <= base) return 1.0;  // at num == base the formula is exactly 1

  const double n = static_cast<double>(num);
  const double log_num = log_base == 10 ? std::log10(n) : std::log(n) / std::log(double(log_base));
  const double inv_ents = 1.0 / static_cast<double>(ents);
  return (1.0 / log_num - inv_ents) / (1.0 - inv_ents);
}

FusionResult fuse_evidence(std::span<const std::string> concepts, std::span<const double> p_e,
                           const ConceptStats& stats, double threshold, int log_base) {
  if (concepts.empty()) throw EmptyInputError("evidence fusion needs at least one concept");
  if (concepts.size() != p_e.size()) {
    throw DimensionMismatchError("concept and probability lists differ in length");
  }
  FusionResult out;
  out.evidence.reserve(concepts.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const auto num = stats.count(concepts[i]);
    if (!num) throw UnknownConceptError("concept \"" + concepts[i] + "\" is absent from statistics");
    EvidenceItem item;
    item.concept_text = concepts[i];
    item.p_e = p_e[i];
    item.contribution = contribution(*num, stats.ents, log_base);
    item.weighted = item.p_e * item.contribution;
    sum += item.weighted;
    out.evidence.push_back(std::move(item));
  }
  out.p_h = sum / static_cast<double>(concepts.size());
  out.accept = out.p_h >= threshold;
  return out;
}

FusionResult evidence_fusion(const EntityRecord& entity, const ImageRef& image,
                             const Scorer& scorer, const ConceptStats& stats,
                             ConceptStrategy strategy, double threshold, int log_base,
                             std::size_t threads) {
  const auto concepts = select_concepts(entity, strategy);
  if (concepts.empty()) {
    throw EmptyInputError("entity \"" + entity.id + "\" has no concepts for evidence fusion");
  }
  // Validate against stats before spending scorer calls.
  for (const auto& c : concepts) {
    if (!stats.count(c)) throw UnknownConceptError("concept \"" + c + "\" is absent from statistics");
  }
  std::vector<ScoreRequest> requests;
  requests.reserve(concepts.size());
  for (const auto& c : concepts) requests.push_back(ScoreRequest{c, image});
  const auto results = scorer.score_batch(requests, threads);
  std::vector<double> p_e;
  p_e.reserve(results.size());
  for (const auto& r : results) p_e.push_back(r.prediction);
  return fuse_evidence(concepts, p_e, stats, threshold, log_base);
}

GroundingVerdict ground_pair(const EntityRecord& entity, const ImageRef& image,
                             const Scorer& scorer, const ConceptStats& stats,
                             ConceptStrategy strategy, const StageConfig& config) {
  config.validate();
  GroundingVerdict v;
  v.entity_id = entity.id;
  v.image_id = image.id;
  const auto s1 = stage1(entity, image, scorer, strategy, config.stage1_threshold);
  v.stage1_prediction = s1.prediction;
  v.stage1_accept = s1.accept;
  v.final_label = s1.accept;
  if (s1.accept || !config.run_stage2 || select_concepts(entity, strategy).empty()) return v;

  auto fused = evidence_fusion(entity, image, scorer, stats, strategy, config.stage2_threshold,
                               config.log_base, config.threads);
  v.evidence = std::move(fused.evidence);
  v.p_h = fused.p_h;
  v.stage2_accept = fused.accept;
  v.final_label = fused.accept;
  return v;
}

std::vector<RankedCandidate> rank_candidates(const EntityRecord& entity,
                                             std::span<const ImageRef> candidates,
                                             const Scorer& scorer, ConceptStrategy strategy,
                                             std::size_t threads) {
  if (candidates.empty()) throw EmptyInputError("ranking needs at least one candidate");
  const auto text = concat_text(entity.name, select_concepts(entity, strategy));
  std::vector<ScoreRequest> requests;
  requests.reserve(candidates.size());
  for (const auto& img : candidates) requests.push_back(ScoreRequest{text, img});
  const auto results = scorer.score_batch(requests, threads);

  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ranked.push_back(RankedCandidate{candidates[i], results[i].prediction});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.prediction != b.prediction) return a.prediction > b.prediction;
    return a.image.id < b.image.id;
  });
  return ranked;
}

}  // namespace cog
