#include "cog/http_api.hpp"

#include <charconv>

#include "cog/error.hpp"
#include "httplib.h"

namespace cog {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, Json{{"error", message}});
}

// Maps library exceptions onto HTTP status codes.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const AlreadyDecidedError& e) {
      send_error(res, 409, e.what());
    } catch (const DuplicateItemError& e) {
      send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const ScorerError& e) {
      send_error(res, 502, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

Json parse_body(const httplib::Request& req) {
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("request body is not JSON: ") + e.what());
  }
}

std::vector<std::string> string_list(const Json& body, const char* field) {
  const auto it = body.find(field);
  if (it == body.end() || !it->is_array()) {
    throw ValidationError(std::string("'") + field + "' must be an array of strings");
  }
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw ValidationError(std::string("'") + field + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string string_field(const Json& body, const char* field) {
  const auto it = body.find(field);
  if (it == body.end() || !it->is_string()) {
    throw ValidationError(std::string("'") + field + "' must be a string");
  }
  return it->get<std::string>();
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto value = req.get_param_value(name);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ValidationError(std::string("query parameter '") + name + "' must be a non-negative integer");
  }
  return out;
}

bool authorized(const httplib::Request& req, const std::string& token) {
  if (req.get_header_value("X-Api-Token") == token) return true;
  return req.get_header_value("Authorization") == "Bearer " + token;
}

}  // namespace

void mount_routes(httplib::Server& server, GroundingService& service, const HttpOptions& options) {
  if (options.api_token) {
    const std::string token = *options.api_token;
    server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/v1/", 0) != 0 || req.path == "/v1/health") {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      if (authorized(req, token)) return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, 401, "missing or invalid API token");
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  server.Get("/v1/health", guarded([&service](const httplib::Request&, httplib::Response& res) {
    const auto pending = service.queue().list(ItemStatus::Pending, 0, 0).total;
    send_json(res, 200,
              Json{{"status", "ok"},
                   {"entities", service.corpus().entities().size()},
                   {"images", service.corpus().images().size()},
                   {"queue", {{"total", service.queue().size()}, {"pending", pending}}}});
  }));

  server.Post("/v1/ground", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto entity_id = string_field(body, "entity_id");
    const auto image_ids = string_list(body, "image_ids");
    if (image_ids.empty()) throw ValidationError("'image_ids' must not be empty");
    bool enqueue = true;
    if (const auto it = body.find("enqueue"); it != body.end()) {
      if (!it->is_boolean()) throw ValidationError("'enqueue' must be a boolean");
      enqueue = it->get<bool>();
    }
    const auto result = service.ground(entity_id, image_ids, enqueue);
    Json verdicts = Json::array();
    for (const auto& v : result.verdicts) verdicts.push_back(to_json(v));
    send_json(res, 200, Json{{"verdicts", std::move(verdicts)}, {"enqueued", result.enqueued}});
  }));

  server.Post("/v1/rank", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto entity_id = string_field(body, "entity_id");
    const auto ids = string_list(body, "candidate_ids");
    Json ranking = Json::array();
    for (const auto& c : service.rank(entity_id, ids)) {
      ranking.push_back(Json{{"image_id", c.image.id}, {"prediction", c.prediction}});
    }
    send_json(res, 200, Json{{"entity_id", entity_id}, {"ranking", std::move(ranking)}});
  }));

  server.Post("/v1/queue", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto it = body.find("verdicts");
    if (it == body.end() || !it->is_array()) throw ValidationError("'verdicts' must be an array");
    std::vector<GroundingVerdict> verdicts;
    for (const auto& v : *it) verdicts.push_back(verdict_from_json(v));
    const auto n = service.queue().enqueue_rejections(verdicts, &service.corpus());
    send_json(res, 200, Json{{"enqueued", n}});
  }));

  server.Get("/v1/queue", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    const auto status = parse_status_filter(req.has_param("status") ? req.get_param_value("status")
                                                                    : std::string("pending"));
    const auto limit = size_param(req, "limit", 50);
    const auto offset = size_param(req, "offset", 0);
    const auto page = service.queue().list(status, offset, limit);
    Json items = Json::array();
    for (const auto& item : page.items) items.push_back(to_json(item));
    send_json(res, 200, Json{{"items", std::move(items)}, {"total", page.total}, {"offset", offset}});
  }));

  server.Get(R"(/v1/queue/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const auto item = service.queue().get(req.matches[1]);
               if (!item) throw NotFoundError("no queue item " + std::string(req.matches[1]));
               send_json(res, 200, to_json(*item));
             }));

  server.Post(R"(/v1/queue/([^/]+)/decision)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const auto body = parse_body(req);
                const auto item = service.queue().record_decision(
                    req.matches[1], string_field(body, "annotator"),
                    parse_decision(string_field(body, "decision")));
                send_json(res, 200, to_json(item));
              }));

  server.Get("/v1/report", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    bool with_human = false;
    if (req.has_param("with_human")) {
      const auto v = req.get_param_value("with_human");
      if (v != "true" && v != "false") throw ValidationError("with_human must be true or false");
      with_human = v == "true";
    }
    auto j = report_to_json(service.report(with_human));
    j["with_human"] = with_human;
    j["decisions"] = service.queue().decisions().size();
    send_json(res, 200, j);
  }));

  if (options.ui_dir) {
    if (!server.set_mount_point("/ui", options.ui_dir->string())) {
      throw ValidationError("UI directory " + options.ui_dir->string() + " does not exist");
    }
  }
}

HttpServer::HttpServer(GroundingService& service, HttpOptions options)
    : server_(std::make_unique<httplib::Server>()) {
  mount_routes(*server_, service, options);
}

HttpServer::~HttpServer() {
  stop();
  if (thread_.joinable()) thread_.join();
}

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace cog
