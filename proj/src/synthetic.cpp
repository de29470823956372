#include "cog/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "cog/error.hpp"
#include "cog/random.hpp"
#include "cog/text.hpp"

namespace cog {

void SyntheticWorldConfig::validate() const {
  const auto finite_non_negative = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_non_negative(noise_sigma)) throw ValidationError("noise_sigma must be finite and >= 0");
  if (!finite_non_negative(name_weight) || !finite_non_negative(concept_weight)) {
    throw ValidationError("scorer weights must be finite and >= 0");
  }
  if (!std::isfinite(bias) || bias <= 0.0) throw ValidationError("bias must be finite and > 0");
  if (!(distractor_overlap >= 0.0 && distractor_overlap <= 1.0)) {
    throw ValidationError("distractor_overlap must lie in [0, 1]");
  }
}

std::vector<std::string> token_set(std::string_view s) {
  auto tokens = text::word_tokens(s);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

SyntheticScorer::SyntheticScorer(const Corpus& corpus, SyntheticWorldConfig config)
    : config_(config) {
  config_.validate();
  for (const auto& image : corpus.images()) {
    if (!image.source_entity_id) {
      throw MissingProvenanceError("image \"" + image.id + "\" has no source_entity_id");
    }
    const auto* entity = corpus.find_entity(*image.source_entity_id);
    if (!entity) {
      throw MissingProvenanceError("image \"" + image.id + "\" names unknown source entity \"" +
                                   *image.source_entity_id + "\"");
    }
    Latent latent;
    latent.name_tokens = token_set(entity->name);
    std::string concepts;
    for (const auto& c : entity->concepts) concepts.append(c).push_back(' ');
    latent.concept_tokens = token_set(concepts);
    latents_.emplace(image.id, std::move(latent));
  }
}

const SyntheticScorer::Latent& SyntheticScorer::latent_for(const ImageRef& image) const {
  const auto it = latents_.find(image.id);
  if (it == latents_.end()) {
    throw MissingProvenanceError("image \"" + image.id + "\" is not part of the synthetic world");
  }
  return it->second;
}

double SyntheticScorer::logit(const ScoreRequest& request) const {
  const auto& latent = latent_for(request.image);
  const auto text_tokens = token_set(request.text);
  return config_.name_weight * jaccard(text_tokens, latent.name_tokens) +
         config_.concept_weight * jaccard(text_tokens, latent.concept_tokens) - config_.bias;
}

ScoreResult SyntheticScorer::score(const ScoreRequest& request) const {
  if (request.text.empty()) throw ValidationError("score request text must be non-empty");
  double z = logit(request);
  if (config_.noise_sigma > 0.0) {
    std::uint64_t h = text::fnv1a(request.text);
    h = text::fnv1a("\x1f", h);
    h = text::fnv1a(request.image.id, h);
    z += config_.noise_sigma * gaussian_from_key(h ^ splitmix64(config_.seed));
  }
  return ScoreResult::checked(sigmoid(z));
}

namespace {

// Coarse categories; every one is a single word.
constexpr std::array kBasicConcepts = {
    "person",    "animal",   "place",     "plant",    "building", "organization", "singer",
    "actor",     "writer",   "politician", "athlete", "scientist", "painter",     "musician",
    "director",  "mammal",   "bird",      "fish",     "insect",   "reptile",      "antelope",
    "tree",      "flower",   "herb",      "mountain", "river",    "lake",         "city",
    "village",   "temple",   "bridge",    "company",  "school",   "university",   "band",
    "novel",     "film",     "album",     "game",     "vehicle",  "ship",         "aircraft",
    "mineral",   "dish",     "beverage",  "festival", "dynasty",  "emperor",      "poet",
    "engineer",  "monk",     "general",   "philosopher", "composer", "dancer",    "chef",
    "museum",    "park",     "island",    "desert",
};

// Modifiers combined with a basic concept to form fine-grained concepts.
constexpr std::array kModifiers = {
    "english",    "french",     "chinese",   "ancient",  "medieval", "modern",    "folk",
    "classical",  "tropical",   "alpine",    "coastal",  "northern", "southern",  "rural",
    "imperial",   "independent", "amateur",  "professional", "baroque", "romantic", "jazz",
    "sacred",     "wild",       "domestic",  "marine",   "arid",     "nocturnal", "giant",
    "dwarf",      "pop",        "opera",     "silent",   "documentary", "indie", "state",
    "private",    "public",     "historic",  "volcanic", "freshwater",
};

constexpr std::array kSyllables = {
    "ka", "lo", "mi", "ra", "ten", "vo", "sel", "dar", "ni", "qu", "zan", "pe", "rho", "tas",
    "mel", "gor", "bri", "sha", "ul", "xen", "dov", "fa", "hin", "jo", "kel", "lun", "mor", "nix",
};

std::string make_word(Rng& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w += kSyllables[uniform_index(rng, kSyllables.size())];
  }
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

// Zipf-like rank draw over [0, n): P(k) proportional to 1 / (k + 1).
std::size_t zipf_index(Rng& rng, const std::vector<double>& cdf) {
  const double u = uniform_unit(rng) * cdf.back();
  return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

std::vector<double> zipf_cdf(std::size_t n) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += 1.0 / static_cast<double>(k + 1);
    cdf[k] = acc;
  }
  return cdf;
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticCorpusOptions& options,
                                 const SyntheticWorldConfig& config) {
  config.validate();
  if (options.entity_count == 0) throw ValidationError("entity_count must be positive");
  if (options.min_concepts == 0 || options.min_concepts > options.max_concepts) {
    throw ValidationError("concept count range must satisfy 1 <= min <= max");
  }
  Rng rng(splitmix64(config.seed ^ 0x5eedc0deULL));

  // Shared head: the first basic concepts, which many entities carry.
  constexpr std::size_t kHead = 12;
  std::vector<std::string> head(kBasicConcepts.begin(), kBasicConcepts.begin() + kHead);
  std::vector<std::string> tail_basic(kBasicConcepts.begin() + kHead, kBasicConcepts.end());
  std::vector<std::string> fine;
  for (const char* mod : kModifiers) {
    for (const char* base : kBasicConcepts) fine.push_back(std::string(mod) + " " + base);
  }
  shuffle(std::span(fine), rng);
  shuffle(std::span(tail_basic), rng);
  const auto head_cdf = zipf_cdf(head.size());
  const auto basic_cdf = zipf_cdf(tail_basic.size());
  const auto fine_cdf = zipf_cdf(fine.size());

  // Given and family names are reused across entities, so unrelated entities
  // often share a name token.
  std::vector<std::string> given(60), family(150);
  for (auto& w : given) w = make_word(rng, 2);
  for (auto& w : family) w = make_word(rng, 2 + uniform_index(rng, 2));

  std::vector<EntityRecord> entities;
  std::vector<ImageRef> images;
  std::vector<PairRecord> pairs;
  entities.reserve(options.entity_count);
  char buf[32];
  for (std::size_t i = 0; i < options.entity_count; ++i) {
    std::snprintf(buf, sizeof buf, "%06zu", i + 1);
    EntityRecord e;
    e.id = std::string("ent-") + buf;
    e.name = given[uniform_index(rng, given.size())] + " " + family[uniform_index(rng, family.size())];
    const double u = 1.0 - uniform_unit(rng);  // (0, 1]
    const double vt = options.viewtimes_scale * std::pow(u, -1.0 / options.viewtimes_alpha);
    e.viewtimes = static_cast<std::uint64_t>(std::min(vt, 1e10));

    const std::size_t k =
        options.min_concepts + uniform_index(rng, options.max_concepts - options.min_concepts + 1);
    std::set<std::string> chosen;
    for (std::size_t guard = 0; e.concepts.size() < k && guard < 64 * k; ++guard) {
      std::string c;
      if (uniform_unit(rng) < config.distractor_overlap) {
        c = head[zipf_index(rng, head_cdf)];
      } else if (uniform_unit(rng) < options.blc_probability) {
        c = tail_basic[zipf_index(rng, basic_cdf)];
      } else {
        c = fine[zipf_index(rng, fine_cdf)];
      }
      if (chosen.insert(c).second) e.concepts.push_back(std::move(c));
    }

    ImageRef img;
    img.id = std::string("img-") + buf;
    img.locator = "synthetic://" + img.id + ".jpg";
    img.source_entity_id = e.id;
    pairs.push_back(PairRecord{e.id, img.id, true});
    images.push_back(std::move(img));
    entities.push_back(std::move(e));
  }
  return Corpus::build(std::move(entities), std::move(images), std::move(pairs));
}

}  // namespace cog
