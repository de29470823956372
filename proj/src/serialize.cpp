#include "cog/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cog/error.hpp"

namespace cog {

Json to_json(const EntityRecord& e) {
  return Json{{"id", e.id}, {"name", e.name}, {"viewtimes", e.viewtimes}, {"concepts", e.concepts}};
}

Json to_json(const ImageRef& i) {
  Json j{{"id", i.id}, {"locator", i.locator}};
  if (i.source_entity_id) j["source_entity_id"] = *i.source_entity_id;
  return j;
}

Json to_json(const PairRecord& p) {
  return Json{{"entity_id", p.entity_id}, {"image_id", p.image_id}, {"label", p.label}};
}

Json to_json(const EvidenceItem& e) {
  return Json{{"concept", e.concept_text},
              {"p_e", e.p_e},
              {"contribution", e.contribution},
              {"weighted", e.weighted}};
}

Json to_json(const GroundingVerdict& v) {
  Json evidence = Json::array();
  for (const auto& e : v.evidence) evidence.push_back(to_json(e));
  Json j{{"entity_id", v.entity_id},
         {"image_id", v.image_id},
         {"stage1_prediction", v.stage1_prediction},
         {"stage1_accept", v.stage1_accept},
         {"evidence", std::move(evidence)}};
  j["p_h"] = v.p_h ? Json(*v.p_h) : Json(nullptr);
  j["stage2_accept"] = v.stage2_accept ? Json(*v.stage2_accept) : Json(nullptr);
  j["final_label"] = v.final_label;
  return j;
}

Json to_json(const CorpusSummary& s) {
  return Json{{"entities", s.entities},
              {"images", s.images},
              {"pairs", s.pairs},
              {"concepts", s.concepts},
              {"blc_concepts", s.blc_concepts},
              {"avg_concepts_per_entity", round_half_even(s.avg_concepts_per_entity, 2)},
              {"avg_blc_concepts_per_entity", round_half_even(s.avg_blc_concepts_per_entity, 2)},
              {"long_tailed_entities", s.long_tailed_entities}};
}

namespace {

template <typename T>
T field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

GroundingVerdict verdict_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("verdict must be a JSON object");
  GroundingVerdict v;
  v.entity_id = field<std::string>(j, "entity_id");
  v.image_id = field<std::string>(j, "image_id");
  v.stage1_prediction = field<double>(j, "stage1_prediction");
  v.stage1_accept = field<bool>(j, "stage1_accept");
  v.final_label = field<bool>(j, "final_label");
  if (const auto it = j.find("evidence"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("field 'evidence' must be an array");
    for (const auto& e : *it) {
      v.evidence.push_back(EvidenceItem{field<std::string>(e, "concept"), field<double>(e, "p_e"),
                                        field<double>(e, "contribution"),
                                        field<double>(e, "weighted")});
    }
  }
  if (const auto it = j.find("p_h"); it != j.end() && !it->is_null()) v.p_h = field<double>(j, "p_h");
  if (const auto it = j.find("stage2_accept"); it != j.end() && !it->is_null()) {
    v.stage2_accept = field<bool>(j, "stage2_accept");
  }
  return v;
}

Json report_to_json(const EvalReport& report) {
  const auto pct = [](double v) { return round_half_even(100.0 * v, 2); };
  Json j = Json::object();
  if (report.ranking) {
    const auto& r = *report.ranking;
    Json rj{{"instances", r.instances}, {"mr", round_half_even(r.mr, 2)}, {"mrr", pct(r.mrr)}};
    for (const auto& [k, v] : r.hit_at) rj["hit@" + std::to_string(k)] = pct(v);
    j["ranking"] = std::move(rj);
  }
  if (report.classification) {
    const auto& c = *report.classification;
    j["classification"] = Json{{"samples", c.samples},     {"accuracy", pct(c.accuracy)},
                               {"precision", pct(c.precision)}, {"recall", pct(c.recall)},
                               {"f1", pct(c.f1)},           {"tp", c.tp},
                               {"fp", c.fp},                {"fn", c.fn},
                               {"tn", c.tn}};
  }
  j["scale"] = "percent";
  j["rounding"] = "half-to-even, 2 decimals";
  return j;
}

std::string report_to_csv(const EvalReport& report, const std::string& row_label) {
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  const auto pct = [&](double v) { return num(round_half_even(100.0 * v, 2)); };
  std::ostringstream out;
  if (report.ranking) {
    const auto& r = *report.ranking;
    out << "Models,MR,MRR";
    for (const auto& [k, v] : r.hit_at) out << ",Hit@" << k;
    out << "\n" << row_label << "," << num(round_half_even(r.mr, 2)) << "," << pct(r.mrr);
    for (const auto& [k, v] : r.hit_at) out << "," << pct(v);
    out << "\n";
  }
  if (report.classification) {
    const auto& c = *report.classification;
    out << "Models,Accuracy,Precision,Recall,F1\n"
        << row_label << "," << pct(c.accuracy) << "," << pct(c.precision) << "," << pct(c.recall)
        << "," << pct(c.f1) << "\n";
  }
  return out.str();
}

void write_jsonl(const std::filesystem::path& path, std::span<const Json> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

namespace {

contrastive::Matrix matrix_field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || !it->is_array()) {
    throw ValidationError(std::string("fixture field '") + name + "' must be an array of rows");
  }
  try {
    return contrastive::Matrix::from_rows(it->get<std::vector<std::vector<double>>>());
  } catch (const Json::exception&) {
    throw ValidationError(std::string("fixture field '") + name + "' must hold numeric rows");
  }
}

std::vector<contrastive::Matrix> matrix_list_field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || !it->is_array()) {
    throw ValidationError(std::string("fixture field '") + name + "' must be an array of matrices");
  }
  std::vector<contrastive::Matrix> out;
  for (const auto& m : *it) {
    try {
      out.push_back(contrastive::Matrix::from_rows(m.get<std::vector<std::vector<double>>>()));
    } catch (const Json::exception&) {
      throw ValidationError(std::string("fixture field '") + name + "' must hold numeric matrices");
    }
  }
  return out;
}

std::optional<double> optional_number(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ValidationError(std::string("'") + name + "' must be a number");
  return it->get<double>();
}

}  // namespace

BatchFixture batch_fixture_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("batch fixture must be a JSON object");
  BatchFixture f;
  const auto ents = j.find("entities");
  if (ents == j.end() || !ents->is_array()) throw ValidationError("fixture needs an 'entities' array");
  for (const auto& e : *ents) {
    EntityRecord rec;
    rec.id = field<std::string>(e, "id");
    rec.name = e.contains("name") ? field<std::string>(e, "name") : rec.id;
    rec.concepts = e.contains("concepts") ? field<std::vector<std::string>>(e, "concepts")
                                          : std::vector<std::string>{};
    f.spec.entities.push_back(std::move(rec));
  }
  if (const auto n = j.find("batch_size"); n != j.end()) {
    if (!n->is_number_unsigned() || n->get<std::size_t>() != f.spec.entities.size()) {
      throw DimensionMismatchError("batch_size does not match the number of entities");
    }
  }
  f.spec.entity_predictions = matrix_field(j, "entity_predictions");
  f.spec.concept_predictions = matrix_list_field(j, "concept_predictions");
  const auto built = contrastive::build_labels(f.spec.entities);
  f.spec.entity_labels = j.contains("entity_labels") ? matrix_field(j, "entity_labels") : built.entity;
  f.spec.concept_labels =
      j.contains("concept_labels") ? matrix_list_field(j, "concept_labels") : built.concepts;
  if (const auto it = j.find("expected"); it != j.end()) {
    f.expected_entity = optional_number(*it, "entity_loss");
    f.expected_concept = optional_number(*it, "concept_loss");
    f.expected_total = optional_number(*it, "total_loss");
  }
  f.spec.validate();
  return f;
}

BatchFixture load_batch_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return batch_fixture_from_json(j);
}

}  // namespace cog
