#include "cog/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_set>

#include "cog/error.hpp"
#include "cog/random.hpp"
#include "cog/text.hpp"
#include "json.hpp"

namespace cog {

using nlohmann::json;

namespace {

std::string pair_key(std::string_view entity_id, std::string_view image_id) {
  std::string key;
  key.reserve(entity_id.size() + image_id.size() + 1);
  key.append(entity_id).push_back('\x1f');
  key.append(image_id);
  return key;
}

std::vector<std::string> dedupe(std::vector<std::string> items) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& s : items) {
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

// Calls fn(object, line_number) for every non-blank line of a JSONL file.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
    fn(obj, line_no);
  }
}

std::string require_string(const json& obj, const char* field, const std::filesystem::path& path,
                           std::size_t line, bool non_empty = true) {
  const auto it = obj.find(field);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(path.string(), line, std::string("missing or non-string field '") + field + "'");
  }
  auto value = it->get<std::string>();
  if (non_empty && value.empty()) {
    throw ParseError(path.string(), line, std::string("field '") + field + "' must be non-empty");
  }
  return value;
}

std::vector<std::string> require_string_array(const json& obj, const char* field,
                                              const std::filesystem::path& path, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end() || !it->is_array()) {
    throw ParseError(path.string(), line, std::string("missing or non-array field '") + field + "'");
  }
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) {
      throw ParseError(path.string(), line, std::string("field '") + field + "' must hold strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

// Rejects a repeated id, naming both lines.
class IdTracker {
 public:
  IdTracker(const std::filesystem::path& path, const char* kind) : path_(path), kind_(kind) {}

  void add(const std::string& id, std::size_t line) {
    const auto [it, inserted] = first_line_.emplace(id, line);
    if (!inserted) {
      throw DuplicateIdError(path_.string() + ":" + std::to_string(line) + ": duplicate " + kind_ +
                             " id \"" + id + "\" (first seen at line " +
                             std::to_string(it->second) + ")");
    }
  }

 private:
  const std::filesystem::path& path_;
  const char* kind_;
  std::unordered_map<std::string, std::size_t> first_line_;
};

}  // namespace

std::optional<std::uint64_t> ConceptStats::count(std::string_view name) const {
  const auto it = counts.find(name);
  if (it == counts.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(ConceptStrategy s) {
  switch (s) {
    case ConceptStrategy::None: return "none";
    case ConceptStrategy::Blc: return "blc";
    case ConceptStrategy::All: return "all";
  }
  return "none";
}

ConceptStrategy parse_strategy(std::string_view s) {
  const auto lower = text::ascii_lower(s);
  if (lower == "none") return ConceptStrategy::None;
  if (lower == "blc") return ConceptStrategy::Blc;
  if (lower == "all") return ConceptStrategy::All;
  throw ValidationError("unknown concept strategy '" + std::string(s) + "' (expected none|blc|all)");
}

Corpus Corpus::build(std::vector<EntityRecord> entities, std::vector<ImageRef> images,
                     std::vector<PairRecord> pairs) {
  Corpus c;
  c.entities_ = std::move(entities);
  c.images_ = std::move(images);
  c.pairs_ = std::move(pairs);

  for (std::size_t i = 0; i < c.entities_.size(); ++i) {
    auto& e = c.entities_[i];
    if (e.id.empty()) throw ValidationError("entity with empty id at index " + std::to_string(i));
    if (e.name.empty()) throw ValidationError("entity \"" + e.id + "\" has an empty name");
    e.concepts = dedupe(std::move(e.concepts));
    if (!c.entity_index_.emplace(e.id, i).second) {
      throw DuplicateIdError("duplicate entity id \"" + e.id + "\"");
    }
  }
  for (std::size_t i = 0; i < c.images_.size(); ++i) {
    const auto& img = c.images_[i];
    if (img.id.empty()) throw ValidationError("image with empty id at index " + std::to_string(i));
    if (img.locator.empty()) throw ValidationError("image \"" + img.id + "\" has an empty locator");
    if (!c.image_index_.emplace(img.id, i).second) {
      throw DuplicateIdError("duplicate image id \"" + img.id + "\"");
    }
  }
  for (std::size_t i = 0; i < c.pairs_.size(); ++i) {
    const auto& p = c.pairs_[i];
    if (!c.entity_index_.contains(p.entity_id)) {
      throw DanglingReferenceError("pair " + std::to_string(i) + " references unknown entity \"" +
                                   p.entity_id + "\"");
    }
    if (!c.image_index_.contains(p.image_id)) {
      throw DanglingReferenceError("pair " + std::to_string(i) + " references unknown image \"" +
                                   p.image_id + "\"");
    }
    if (!c.pair_index_.emplace(pair_key(p.entity_id, p.image_id), i).second) {
      throw DuplicateIdError("duplicate pair (" + p.entity_id + ", " + p.image_id + ")");
    }
  }
  return c;
}

const EntityRecord* Corpus::find_entity(std::string_view id) const {
  const auto it = entity_index_.find(std::string(id));
  return it == entity_index_.end() ? nullptr : &entities_[it->second];
}

const ImageRef* Corpus::find_image(std::string_view id) const {
  const auto it = image_index_.find(std::string(id));
  return it == image_index_.end() ? nullptr : &images_[it->second];
}

const EntityRecord& Corpus::entity(std::string_view id) const {
  if (const auto* e = find_entity(id)) return *e;
  throw NotFoundError("unknown entity \"" + std::string(id) + "\"");
}

const ImageRef& Corpus::image(std::string_view id) const {
  if (const auto* i = find_image(id)) return *i;
  throw NotFoundError("unknown image \"" + std::string(id) + "\"");
}

std::optional<bool> Corpus::truth(std::string_view entity_id, std::string_view image_id) const {
  if (const auto it = pair_index_.find(pair_key(entity_id, image_id)); it != pair_index_.end()) {
    return pairs_[it->second].label;
  }
  const auto* img = find_image(image_id);
  if (img && img->source_entity_id) return *img->source_entity_id == entity_id;
  return std::nullopt;
}

std::vector<PairRecord> Corpus::positive_pairs() const {
  std::vector<PairRecord> out;
  for (const auto& p : pairs_) {
    if (p.label) out.push_back(p);
  }
  return out;
}

std::vector<EntityRecord> load_entities(const std::filesystem::path& path) {
  std::vector<EntityRecord> out;
  IdTracker ids(path, "entity");
  for_each_record(path, [&](const json& obj, std::size_t line) {
    EntityRecord e;
    e.id = require_string(obj, "id", path, line);
    e.name = require_string(obj, "name", path, line);
    const auto vt = obj.find("viewtimes");
    if (vt == obj.end() || !vt->is_number_integer() ||
        (!vt->is_number_unsigned() && vt->get<std::int64_t>() < 0)) {
      throw ParseError(path.string(), line, "field 'viewtimes' must be a non-negative integer");
    }
    e.viewtimes = vt->get<std::uint64_t>();
    e.concepts = dedupe(require_string_array(obj, "concepts", path, line));
    ids.add(e.id, line);
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<ImageRef> load_images(const std::filesystem::path& path) {
  std::vector<ImageRef> out;
  IdTracker ids(path, "image");
  for_each_record(path, [&](const json& obj, std::size_t line) {
    ImageRef img;
    img.id = require_string(obj, "id", path, line);
    img.locator = require_string(obj, "locator", path, line);
    if (const auto it = obj.find("source_entity_id"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw ParseError(path.string(), line, "field 'source_entity_id' must be a string");
      }
      img.source_entity_id = it->get<std::string>();
    }
    ids.add(img.id, line);
    out.push_back(std::move(img));
  });
  return out;
}

std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  std::vector<PairRecord> out;
  for_each_record(path, [&](const json& obj, std::size_t line) {
    PairRecord p;
    p.entity_id = require_string(obj, "entity_id", path, line);
    p.image_id = require_string(obj, "image_id", path, line);
    const auto it = obj.find("label");
    if (it == obj.end() || !it->is_boolean()) {
      throw ParseError(path.string(), line, "missing or non-boolean field 'label'");
    }
    p.label = it->get<bool>();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<LinkingRecord> load_linking(const std::filesystem::path& path) {
  std::vector<LinkingRecord> out;
  for_each_record(path, [&](const json& obj, std::size_t line) {
    LinkingRecord r;
    r.image_id = require_string(obj, "image_id", path, line);
    r.caption = require_string(obj, "caption", path, line, false);
    r.linked_entities = require_string_array(obj, "linked_entities", path, line);
    out.push_back(std::move(r));
  });
  return out;
}

Corpus load_corpus(const std::filesystem::path& entities_path,
                   const std::filesystem::path& images_path,
                   const std::optional<std::filesystem::path>& pairs_path) {
  auto entities = load_entities(entities_path);
  auto images = load_images(images_path);
  std::vector<PairRecord> pairs;
  if (pairs_path) {
    pairs = load_pairs(*pairs_path);
    // Resolve references here so the error can name the offending line.
    std::unordered_set<std::string_view> entity_ids, image_ids;
    for (const auto& e : entities) entity_ids.insert(e.id);
    for (const auto& i : images) image_ids.insert(i.id);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& p = pairs[k];
      const char* missing = !entity_ids.contains(p.entity_id) ? "entity"
                            : !image_ids.contains(p.image_id) ? "image"
                                                              : nullptr;
      if (missing) {
        const auto& id = std::string_view(missing) == "entity" ? p.entity_id : p.image_id;
        throw DanglingReferenceError(pairs_path->string() + ": pair #" + std::to_string(k + 1) +
                                     " references unknown " + missing + " \"" + id + "\"");
      }
    }
  }
  return Corpus::build(std::move(entities), std::move(images), std::move(pairs));
}

std::vector<EntityRecord> select_long_tailed(const Corpus& corpus, std::uint64_t threshold) {
  std::vector<EntityRecord> out;
  for (const auto& e : corpus.entities()) {
    if (e.viewtimes < threshold) out.push_back(e);
  }
  return out;
}

std::vector<EntityRecord> select_common(const Corpus& corpus, std::uint64_t threshold) {
  std::vector<EntityRecord> out;
  for (const auto& e : corpus.entities()) {
    if (e.viewtimes > threshold) out.push_back(e);
  }
  return out;
}

std::vector<std::string> select_concepts(const EntityRecord& entity, ConceptStrategy strategy) {
  switch (strategy) {
    case ConceptStrategy::None:
      return {};
    case ConceptStrategy::All:
      return entity.concepts;
    case ConceptStrategy::Blc: {
      std::vector<std::string> out;
      for (const auto& c : entity.concepts) {
        if (text::is_single_token(c)) out.push_back(c);
      }
      return out;
    }
  }
  return {};
}

ConceptStats compute_concept_stats(std::span<const EntityRecord> entities) {
  if (entities.empty()) throw EmptyInputError("concept statistics need at least one entity");
  ConceptStats stats;
  stats.ents = entities.size();
  for (const auto& e : entities) {
    // Concept lists are duplicate-free after loading; guard against
    // hand-built records anyway so each entity counts once per concept.
    std::set<std::string_view> seen;
    for (const auto& c : e.concepts) {
      if (seen.insert(c).second) ++stats.counts[c];
    }
  }
  return stats;
}

bool label_by_linking(std::span<const std::string> linker_entities, std::string_view entity_name,
                      LinkingOptions options) {
  const auto target = text::trim(entity_name);
  if (target.empty()) return false;
  const auto target_lower = text::ascii_lower(target);
  return std::any_of(linker_entities.begin(), linker_entities.end(), [&](const std::string& linked) {
    const auto candidate = text::trim(linked);
    return options.case_insensitive ? text::ascii_lower(candidate) == target_lower
                                    : candidate == target;
  });
}

DatasetSplit split_dataset(std::span<const PairRecord> pairs, std::uint64_t seed) {
  std::vector<PairRecord> shuffled(pairs.begin(), pairs.end());
  Rng rng(seed);
  shuffle(std::span(shuffled), rng);

  const std::size_t n = shuffled.size();
  const std::size_t held_out = (n + 5) / 10;
  const std::size_t train = n - 2 * held_out;

  DatasetSplit split;
  const auto first = shuffled.begin();
  split.train.assign(first, first + static_cast<std::ptrdiff_t>(train));
  split.validation.assign(first + static_cast<std::ptrdiff_t>(train),
                          first + static_cast<std::ptrdiff_t>(train + held_out));
  split.test.assign(first + static_cast<std::ptrdiff_t>(train + held_out), shuffled.end());
  return split;
}

CorpusSummary summarize(const Corpus& corpus) {
  CorpusSummary s;
  s.entities = corpus.entities().size();
  s.images = corpus.images().size();
  s.pairs = corpus.pairs().size();
  std::set<std::string_view> all, blc;
  std::size_t concept_total = 0;
  std::size_t blc_total = 0;
  for (const auto& e : corpus.entities()) {
    for (const auto& c : e.concepts) {
      all.insert(c);
      ++concept_total;
      if (text::is_single_token(c)) {
        blc.insert(c);
        ++blc_total;
      }
    }
    if (e.viewtimes < kLongTailThreshold) ++s.long_tailed_entities;
  }
  s.concepts = all.size();
  s.blc_concepts = blc.size();
  if (s.entities > 0) {
    s.avg_concepts_per_entity = static_cast<double>(concept_total) / static_cast<double>(s.entities);
    s.avg_blc_concepts_per_entity = static_cast<double>(blc_total) / static_cast<double>(s.entities);
  }
  return s;
}

}  // namespace cog
