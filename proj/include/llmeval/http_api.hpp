#pragma once

// HTTP+JSON front end over service::Service.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <sys/socket.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmeval/error.hpp"
#include "llmeval/service.hpp"
#include "llmeval/text.hpp"

namespace llmeval::http_api {

inline int status_for(Errc code) {
  switch (code) {
    case Errc::UnknownSession:
    case Errc::UnknownJob: return 404;
    case Errc::MatrixIncomplete:
    case Errc::InconsistentMatrix:
    case Errc::MissingRatings: return 409;
    case Errc::BackendUnavailable: return 503;
    case Errc::Io: return 500;
    default: return 400;
  }
}

inline nlohmann::json error_body(Errc code, const std::string& message, const std::vector<std::string>& details = {}) {
  return {{"code", to_string(code)}, {"message", message}, {"details", details}};
}

namespace detail {

inline void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRequest, std::string("request body is not valid JSON: ") + e.what());
  }
}

// Accepts a number or a ratio string such as "1/3".
inline double judgment_value(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (auto r = text::parse_ratio(s)) return *r;
    if (auto d = text::parse_double(s)) return *d;
  }
  throw Error(Errc::BadRequest, "judgment value must be a number or a ratio string");
}

inline std::size_t cell_index(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_number_integer()) {
    throw Error(Errc::BadCell, std::string("\"") + key + "\" must be an integer cell index");
  }
  auto v = body.at(key).get<long long>();
  if (v < 0) throw Error(Errc::BadCell, std::string("\"") + key + "\" must be non-negative");
  return static_cast<std::size_t>(v);
}

inline service::RatingInput rating_input(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::BadRequest, "each rating must be an object");
  for (const char* key : {"expert", "subject", "metric", "score"}) {
    if (!j.contains(key)) throw Error(Errc::BadRequest, std::string("rating is missing \"") + key + "\"");
  }
  if (!j.at("score").is_number()) throw Error(Errc::BadRequest, "rating score must be a number");
  try {
    return {j.at("expert").get<std::string>(), j.at("subject").get<std::string>(), j.at("metric").get<std::string>(),
            j.at("score").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRequest, std::string("malformed rating: ") + e.what());
  }
}

}  // namespace detail

class ApiServer {
 public:
  explicit ApiServer(service::Service& svc, std::optional<std::filesystem::path> static_dir = std::nullopt)
      : svc_(svc) {
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        detail::send_json(res, error_body(e.code(), e.what(), e.details()), status_for(e.code()));
      } catch (const nlohmann::json::exception& e) {
        detail::send_json(res, error_body(Errc::BadRequest, e.what()), 400);
      } catch (const std::exception& e) {
        detail::send_json(res, error_body(Errc::Io, e.what()), 500);
      }
    });
    if (static_dir) server_.set_mount_point("/", static_dir->string());
    routes();
  }

  httplib::Server& server() { return server_; }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  void routes() {
    using httplib::Request;
    using httplib::Response;

    server_.Get("/healthz", [](const Request&, Response& res) { detail::send_json(res, {{"status", "ok"}}); });

    server_.Post("/sessions", [this](const Request& req, Response& res) {
      auto body = detail::parse_body(req);
      if (!body.is_object() || !body.contains("metrics") || !body.contains("subjects")) {
        throw Error(Errc::BadRequest, "session needs \"metrics\" and \"subjects\"");
      }
      service::SessionConfig cfg;
      if (body.contains("config")) {
        try {
          body.at("config").get_to(cfg);
        } catch (const Error& e) {
          throw Error(Errc::BadRequest, e.what());
        }
      }
      auto id = svc_.create_session(body.at("metrics").get<std::vector<std::string>>(),
                                    body.at("subjects").get<std::vector<std::string>>(), std::move(cfg));
      detail::send_json(res, svc_.session_view(id), 201);
    });

    server_.Get(R"(/sessions/([^/]+))", [this](const Request& req, Response& res) {
      detail::send_json(res, svc_.session_view(req.matches[1]));
    });

    server_.Put(R"(/sessions/([^/]+)/judgments)", [this](const Request& req, Response& res) {
      const std::string id = req.matches[1];
      auto body = detail::parse_body(req);
      if (!body.is_object()) throw Error(Errc::BadRequest, "judgment body must be an object");
      service::LiveConsistency live;
      if (body.contains("entries")) {
        std::vector<std::vector<double>> entries;
        for (const auto& row : body.at("entries")) {
          std::vector<double> r;
          for (const auto& v : row) r.push_back(detail::judgment_value(v));
          entries.push_back(std::move(r));
        }
        live = svc_.import_matrix(id, entries);
      } else {
        if (!body.contains("value")) throw Error(Errc::BadRequest, "judgment needs \"value\"");
        live = svc_.submit_judgment(id, detail::cell_index(body, "i"), detail::cell_index(body, "j"),
                                    detail::judgment_value(body.at("value")));
      }
      detail::send_json(res, live);
    });

    server_.Post(R"(/sessions/([^/]+)/ratings)", [this](const Request& req, Response& res) {
      const std::string id = req.matches[1];
      auto body = detail::parse_body(req);
      const auto& list = body.is_object() && body.contains("ratings") ? body.at("ratings") : body;
      std::vector<service::RatingInput> inputs;
      if (list.is_array()) {
        for (const auto& r : list) inputs.push_back(detail::rating_input(r));
      } else {
        inputs.push_back(detail::rating_input(list));
      }
      auto total = svc_.submit_ratings(id, inputs);
      detail::send_json(res, {{"accepted", inputs.size()}, {"total", total}});
    });

    server_.Get(R"(/sessions/([^/]+)/weights)", [this](const Request& req, Response& res) {
      detail::send_json(res, svc_.weights(req.matches[1]));
    });

    server_.Get(R"(/sessions/([^/]+)/report)", [this](const Request& req, Response& res) {
      detail::send_json(res, svc_.report(req.matches[1]));
    });

    server_.Post(R"(/sessions/([^/]+)/judge-jobs)", [this](const Request& req, Response& res) {
      const std::string id = req.matches[1];
      auto body = detail::parse_body(req);
      if (!body.is_object() || !body.contains("task")) throw Error(Errc::BadRequest, "judge job needs \"task\"");
      service::JudgeJobRequest job;
      body.at("task").get_to(job.task);
      if (body.contains("config")) body.at("config").get_to(job.config);
      if (body.contains("replay_dir")) job.replay_dir = body.at("replay_dir").get<std::string>();
      if (body.contains("backend")) job.backend = body.at("backend").get<judge::HttpBackendConfig>();
      auto job_id = svc_.start_judge_job(id, std::move(job));
      detail::send_json(res, {{"id", job_id}, {"status", "running"}}, 202);
    });

    server_.Get(R"(/judge-jobs/([^/]+))", [this](const Request& req, Response& res) {
      detail::send_json(res, svc_.poll_job(req.matches[1]));
    });
  }

  service::Service& svc_;
  httplib::Server server_;
};

}  // namespace llmeval::http_api
