#include "cog/remote_scorer.hpp"

#include <algorithm>
#include <thread>

#include "cog/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cog {

using nlohmann::json;

RemoteScorer::RemoteScorer(RemoteScorerOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ValidationError("remote scorer needs a base URL");
  if (options_.max_batch == 0) throw ValidationError("max_batch must be positive");
}

ScoreResult RemoteScorer::score(const ScoreRequest& request) const {
  return post(std::span(&request, 1), 0).front();
}

std::vector<ScoreResult> RemoteScorer::score_batch(std::span<const ScoreRequest> requests,
                                                   std::size_t /*threads*/) const {
  std::vector<ScoreResult> out;
  out.reserve(requests.size());
  for (std::size_t off = 0; off < requests.size(); off += options_.max_batch) {
    const auto n = std::min(options_.max_batch, requests.size() - off);
    auto chunk = post(requests.subspan(off, n), off);
    out.insert(out.end(), chunk.begin(), chunk.end());
  }
  return out;
}

std::vector<ScoreResult> RemoteScorer::post(std::span<const ScoreRequest> chunk,
                                            std::size_t offset) const {
  json items = json::array();
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    if (chunk[i].text.empty()) throw BatchError(offset + i, "score request text must be non-empty");
    items.push_back({{"text", chunk[i].text}, {"image", chunk[i].image.locator}});
  }
  const std::string body = json{{"items", std::move(items)}}.dump();

  httplib::Client client(options_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Result res;
  for (std::size_t attempt = 0; attempt <= options_.retries; ++attempt) {
    res = client.Post("/v1/score", body, "application/json");
    if (res && res->status < 500) break;
    if (attempt < options_.retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50) * (attempt + 1));
    }
  }
  if (!res) {
    throw TransportError("POST " + options_.base_url + "/v1/score failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("POST " + options_.base_url + "/v1/score returned HTTP " +
                         std::to_string(res->status));
  }

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw MalformedResponseError(std::string("score response is not JSON: ") + e.what());
  }
  const auto it = doc.is_object() ? doc.find("scores") : doc.end();
  if (it == doc.end() || !it->is_array()) {
    throw MalformedResponseError("score response lacks a \"scores\" array");
  }
  if (it->size() != chunk.size()) {
    throw MalformedResponseError("score response has " + std::to_string(it->size()) +
                                 " scores for " + std::to_string(chunk.size()) + " items");
  }
  std::vector<ScoreResult> out;
  out.reserve(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const auto& v = (*it)[i];
    if (!v.is_number()) throw MalformedResponseError("score " + std::to_string(offset + i) + " is not a number");
    try {
      out.push_back(ScoreResult::checked(v.get<double>()));
    } catch (const ScoreRangeError& e) {
      throw ScoreRangeError("batch element " + std::to_string(offset + i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cog
