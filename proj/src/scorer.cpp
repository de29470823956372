#include "cog/scorer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "cog/error.hpp"

namespace cog {

ScoreResult ScoreResult::checked(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ScoreRangeError("score " + std::to_string(p) + " outside [0, 1]");
  }
  return ScoreResult{p};
}

double sigmoid(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

std::size_t default_thread_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  // Indices are handed out in increasing order, so once index f fails every
  // index below f has already been claimed and will finish.
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> first_failure{std::numeric_limits<std::size_t>::max()};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || i > first_failure.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < first_failure.load()) {
          first_failure.store(i);
          error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

std::vector<ScoreResult> Scorer::score_batch(std::span<const ScoreRequest> requests,
                                             std::size_t threads) const {
  std::vector<ScoreResult> out(requests.size());
  parallel_for(requests.size(), threads, [&](std::size_t i) {
    try {
      out[i] = score(requests[i]);
    } catch (const BatchError&) {
      throw;
    } catch (const std::exception& e) {
      throw BatchError(i, e.what());
    }
  });
  return out;
}

CachingScorer::CachingScorer(std::shared_ptr<const Scorer> inner) : inner_(std::move(inner)) {}

ScoreResult CachingScorer::score(const ScoreRequest& request) const {
  auto key = std::make_pair(request.text, request.image.id);
  {
    std::shared_lock lock(mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const ScoreResult result = inner_->score(request);
  std::unique_lock lock(mutex_);
  // A concurrent caller may have filled the slot first; keep the first value.
  return cache_.emplace(std::move(key), result).first->second;
}

std::vector<ScoreResult> CachingScorer::score_batch(std::span<const ScoreRequest> requests,
                                                    std::size_t threads) const {
  std::vector<ScoreResult> out(requests.size());
  std::vector<std::size_t> misses;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto it = cache_.find(std::make_pair(requests[i].text, requests[i].image.id));
      if (it != cache_.end()) {
        out[i] = it->second;
      } else {
        misses.push_back(i);
      }
    }
  }
  if (misses.empty()) return out;
  std::vector<ScoreRequest> pending;
  pending.reserve(misses.size());
  for (auto i : misses) pending.push_back(requests[i]);
  std::vector<ScoreResult> fresh;
  try {
    fresh = inner_->score_batch(pending, threads);
  } catch (const BatchError& e) {
    // Report the index within the caller's batch.
    const auto what = std::string(e.what());
    const auto colon = what.find(": ");
    throw BatchError(misses.at(e.index()), colon == std::string::npos ? what : what.substr(colon + 2));
  }
  std::unique_lock lock(mutex_);
  for (std::size_t j = 0; j < misses.size(); ++j) {
    const auto& r = requests[misses[j]];
    out[misses[j]] = cache_.emplace(std::make_pair(r.text, r.image.id), fresh[j]).first->second;
  }
  return out;
}

std::size_t CachingScorer::size() const {
  std::shared_lock lock(mutex_);
  return cache_.size();
}

}  // namespace cog
