#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cog {

struct EntityRecord {
  std::string id;
  std::string name;
  std::uint64_t viewtimes = 0;
  std::vector<std::string> concepts;  // duplicate-free, input order

  bool operator==(const EntityRecord&) const = default;
};

struct ImageRef {
  std::string id;
  std::string locator;
  std::optional<std::string> source_entity_id;

  bool operator==(const ImageRef&) const = default;
};

struct PairRecord {
  std::string entity_id;
  std::string image_id;
  bool label = true;

  bool operator==(const PairRecord&) const = default;
};

struct LinkingRecord {
  std::string image_id;
  std::string caption;
  std::vector<std::string> linked_entities;
};

// Per-concept entity counts over one evaluation corpus.
struct ConceptStats {
  std::uint64_t ents = 0;
  std::map<std::string, std::uint64_t, std::less<>> counts;

  std::optional<std::uint64_t> count(std::string_view name) const;
};

enum class ConceptStrategy { None, Blc, All };

std::string_view to_string(ConceptStrategy s);
// Accepts "none", "blc", "all" (case-insensitive).
ConceptStrategy parse_strategy(std::string_view s);

// Immutable, indexed collection of entities, images and labeled pairs.
class Corpus {
 public:
  Corpus() = default;

  // Validates id uniqueness and pair references. Concept lists are
  // deduplicated keeping first occurrences.
  static Corpus build(std::vector<EntityRecord> entities, std::vector<ImageRef> images,
                      std::vector<PairRecord> pairs = {});

  std::span<const EntityRecord> entities() const { return entities_; }
  std::span<const ImageRef> images() const { return images_; }
  std::span<const PairRecord> pairs() const { return pairs_; }

  const EntityRecord* find_entity(std::string_view id) const;
  const ImageRef* find_image(std::string_view id) const;
  // Throws NotFoundError.
  const EntityRecord& entity(std::string_view id) const;
  const ImageRef& image(std::string_view id) const;

  // Ground truth for (entity, image): an explicit pair label wins, then image
  // provenance; nullopt when neither is known.
  std::optional<bool> truth(std::string_view entity_id, std::string_view image_id) const;

  // Pairs with label == true.
  std::vector<PairRecord> positive_pairs() const;

 private:
  std::vector<EntityRecord> entities_;
  std::vector<ImageRef> images_;
  std::vector<PairRecord> pairs_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  std::unordered_map<std::string, std::size_t> image_index_;
  std::unordered_map<std::string, std::size_t> pair_index_;
};

// JSONL loaders. Unknown fields are ignored; errors carry file and line.
std::vector<EntityRecord> load_entities(const std::filesystem::path& path);
std::vector<ImageRef> load_images(const std::filesystem::path& path);
std::vector<PairRecord> load_pairs(const std::filesystem::path& path);
std::vector<LinkingRecord> load_linking(const std::filesystem::path& path);

Corpus load_corpus(const std::filesystem::path& entities_path,
                   const std::filesystem::path& images_path,
                   const std::optional<std::filesystem::path>& pairs_path = std::nullopt);

// Entities with viewtimes strictly below threshold, in corpus order.
std::vector<EntityRecord> select_long_tailed(const Corpus& corpus, std::uint64_t threshold);
// Entities with viewtimes strictly above threshold.
std::vector<EntityRecord> select_common(const Corpus& corpus, std::uint64_t threshold);

inline constexpr std::uint64_t kLongTailThreshold = 100'000;
inline constexpr std::uint64_t kCommonThreshold = 1'000'000;

std::vector<std::string> select_concepts(const EntityRecord& entity, ConceptStrategy strategy);

// Throws EmptyInputError for an empty list.
ConceptStats compute_concept_stats(std::span<const EntityRecord> entities);

struct LinkingOptions {
  bool case_insensitive = false;
};

// True iff entity_name appears among the linker output (both sides trimmed).
bool label_by_linking(std::span<const std::string> linker_entities, std::string_view entity_name,
                      LinkingOptions options = {});

struct DatasetSplit {
  std::vector<PairRecord> train;
  std::vector<PairRecord> validation;
  std::vector<PairRecord> test;
};

// Seeded 8:1:1 partition. Validation and test each get round(N/10) pairs;
// the remainder goes to train.
DatasetSplit split_dataset(std::span<const PairRecord> pairs, std::uint64_t seed);

// Summary in the shape of a dataset statistics table.
struct CorpusSummary {
  std::size_t entities = 0;
  std::size_t images = 0;
  std::size_t pairs = 0;
  std::size_t concepts = 0;
  std::size_t blc_concepts = 0;
  double avg_concepts_per_entity = 0.0;
  double avg_blc_concepts_per_entity = 0.0;
  std::size_t long_tailed_entities = 0;
};

CorpusSummary summarize(const Corpus& corpus);

}  // namespace cog
