#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unistd.h>

#include "cog/corpus.hpp"
#include "cog/error.hpp"
#include "cog/scorer.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(COG_FIXTURE_DIR) / name;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cog-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Scores from a lookup on (text, image id); unknown pairs get `fallback`.
class TableScorer final : public cog::Scorer {
 public:
  explicit TableScorer(double fallback = 0.1) : fallback_(fallback) {}
  TableScorer& set(const std::string& text, const std::string& image, double p) {
    table_[{text, image}] = p;
    return *this;
  }
  cog::ScoreResult score(const cog::ScoreRequest& r) const override {
    calls_++;
    const auto it = table_.find({r.text, r.image.id});
    return cog::ScoreResult::checked(it == table_.end() ? fallback_ : it->second);
  }
  mutable std::atomic<int> calls_{0};

 private:
  double fallback_;
  std::map<std::pair<std::string, std::string>, double> table_;
};

class FnScorer final : public cog::Scorer {
 public:
  using Fn = std::function<double(const cog::ScoreRequest&)>;
  explicit FnScorer(Fn fn) : fn_(std::move(fn)) {}
  cog::ScoreResult score(const cog::ScoreRequest& r) const override {
    return cog::ScoreResult::checked(fn_(r));
  }

 private:
  Fn fn_;
};

inline cog::EntityRecord entity(std::string id, std::string name, std::vector<std::string> concepts,
                                std::uint64_t viewtimes = 10) {
  return cog::EntityRecord{std::move(id), std::move(name), viewtimes, std::move(concepts)};
}

inline cog::ImageRef image(std::string id, std::optional<std::string> source = std::nullopt) {
  return cog::ImageRef{id, "img/" + id + ".jpg", std::move(source)};
}

inline cog::Corpus fixture_corpus() {
  return cog::load_corpus(fixture("entities.jsonl"), fixture("images.jsonl"),
                          fixture("pairs.jsonl"));
}

}  // namespace testing
