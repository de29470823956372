#pragma once

#include <chrono>
#include <cstddef>
#include <string>

#include "cog/scorer.hpp"

namespace cog {

struct RemoteScorerOptions {
  std::string base_url;  // e.g. "http://127.0.0.1:9000"
  std::chrono::milliseconds timeout{10'000};
  std::size_t retries = 2;       // extra attempts after a transport failure
  std::size_t max_batch = 256;   // items per HTTP request
};

// Client for a model service speaking
//   POST /v1/score {"items":[{"text":..,"image":<locator>}]} -> {"scores":[..]}
// Scores outside [0, 1] are protocol violations (ScoreRangeError).
class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteScorerOptions options);

  ScoreResult score(const ScoreRequest& request) const override;

  // Sends chunks of max_batch items; `threads` is ignored.
  std::vector<ScoreResult> score_batch(std::span<const ScoreRequest> requests,
                                       std::size_t threads = 1) const override;

 private:
  std::vector<ScoreResult> post(std::span<const ScoreRequest> chunk, std::size_t offset) const;

  RemoteScorerOptions options_;
};

}  // namespace cog
