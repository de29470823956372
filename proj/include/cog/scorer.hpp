#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cog/corpus.hpp"

namespace cog {

struct ScoreRequest {
  std::string text;  // non-empty
  ImageRef image;
};

// Match probability in [0, 1].
struct ScoreResult {
  double prediction = 0.0;

  // Throws ScoreRangeError when p is NaN or outside [0, 1]; never clamps.
  static ScoreResult checked(double p);
};

double sigmoid(double logit);

// Image-text match predictor. Implementations must be safe for concurrent
// score() calls.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual ScoreResult score(const ScoreRequest& request) const = 0;

  // Element-wise score(), order preserved. The default implementation
  // spreads work over `threads` workers; results do not depend on it.
  // The first failing element is reported as BatchError with its index.
  virtual std::vector<ScoreResult> score_batch(std::span<const ScoreRequest> requests,
                                               std::size_t threads = 1) const;
};

// Memoizes another scorer by (text, image id).
class CachingScorer final : public Scorer {
 public:
  explicit CachingScorer(std::shared_ptr<const Scorer> inner);

  ScoreResult score(const ScoreRequest& request) const override;
  // Misses go to the inner scorer as one batch.
  std::vector<ScoreResult> score_batch(std::span<const ScoreRequest> requests,
                                       std::size_t threads = 1) const override;

  std::size_t size() const;

 private:
  std::shared_ptr<const Scorer> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::pair<std::string, std::string>, ScoreResult> cache_;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions are
// rethrown for the smallest failing index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

std::size_t default_thread_count();

}  // namespace cog
