#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cog/contrastive.hpp"
#include "cog/corpus.hpp"
#include "cog/eval.hpp"
#include "cog/fusion.hpp"
#include "json.hpp"

namespace cog {

using Json = nlohmann::ordered_json;

Json to_json(const EntityRecord& e);
Json to_json(const ImageRef& i);
Json to_json(const PairRecord& p);
Json to_json(const EvidenceItem& e);
Json to_json(const GroundingVerdict& v);
Json to_json(const CorpusSummary& s);

// Throws ValidationError on missing or mistyped fields.
GroundingVerdict verdict_from_json(const Json& j);

// Report with ratios scaled to percent and every value rounded to two
// decimals (ties to even). Counts are reported unscaled.
Json report_to_json(const EvalReport& report);

// CSV rows in the layout of the ranking / classification result tables.
std::string report_to_csv(const EvalReport& report, const std::string& row_label);

// Writes one compact JSON document per line.
void write_jsonl(const std::filesystem::path& path, std::span<const Json> records);

// Batch fixture: {"entities":[{id,name,concepts}], "entity_predictions":[[..]],
// "concept_predictions":[[[..]]], optional "entity_labels"/"concept_labels"
// (built from the entities when absent), optional "expected":
// {"entity_loss","concept_loss","total_loss"}.
struct BatchFixture {
  contrastive::BatchSpec spec;
  std::optional<double> expected_entity;
  std::optional<double> expected_concept;
  std::optional<double> expected_total;
};

BatchFixture batch_fixture_from_json(const Json& j);
BatchFixture load_batch_fixture(const std::filesystem::path& path);

}  // namespace cog
