#include "nailguard/service_http.hpp"

#include <cstdlib>

#include "httplib.h"
#include "nailguard/errors.hpp"

using nlohmann::json;

namespace nailguard {

struct HttpServer::Impl {
  NailService& service;
  std::optional<std::string> token;
  httplib::Server server;

  Impl(NailService& s, std::optional<std::string> t) : service(s), token(std::move(t)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}, {"status", status}});
}

/// Runs `fn` and maps library errors to HTTP statuses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const DecodeError& e) {
    send_error(res, 422, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 422, e.what());
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const Unavailable& e) {
    send_error(res, 503, e.what());
  } catch (const ConfigError& e) {
    send_error(res, 503, e.what());
  } catch (const json::exception& e) {
    send_error(res, 422, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json case_list(const std::vector<Case>& cases, const LabelTaxonomy& t) {
  json out = json::array();
  for (const auto& c : cases) out.push_back(to_json(c, t));
  return out;
}

}  // namespace

HttpServer::HttpServer(NailService& service, std::optional<std::string> token)
    : impl_(std::make_unique<Impl>(service, std::move(token))) {
  auto& srv = impl_->server;
  Impl* self = impl_.get();

  srv.set_pre_routing_handler([self](const httplib::Request& req, httplib::Response& res) {
    if (!self->token) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + *self->token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, 401, "missing or invalid bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.Get("/health", [self](const httplib::Request&, httplib::Response& res) {
    const auto active = self->service.active_model();
    send_json(res, 200, {{"status", "ok"}, {"active_model", active ? json(*active) : json(nullptr)}});
  });

  srv.Get("/models", [self](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json out = json::array();
      for (const auto& m : self->service.models()) {
        out.push_back({{"id", m.id}, {"backbone_id", m.backbone_id}, {"active", m.active}, {"metrics", m.metrics}});
      }
      send_json(res, 200, out);
    });
  });

  srv.Post(R"(/models/([^/]+)/activate)", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      self->service.activate_model(req.matches[1]);
      send_json(res, 200, {{"active_model", std::string(req.matches[1])}});
    });
  });

  srv.Post("/cases", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string body;
      if (req.is_multipart_form_data()) {
        if (req.has_file("image")) {
          body = req.get_file_value("image").content;
        } else if (!req.files.empty()) {
          body = req.files.begin()->second.content;
        } else {
          throw InvalidArgument("multipart upload carries no file");
        }
      } else {
        body = req.body;
      }
      if (body.empty()) throw InvalidArgument("no image supplied");
      const auto* p = reinterpret_cast<const std::uint8_t*>(body.data());
      const Case c = self->service.submit_case({p, body.size()});
      const LabelTaxonomy& t = self->service.taxonomy();
      send_json(res, 201, {{"case_id", c.case_id},
                           {"prediction", {{"category", t.name(c.prediction.category)}, {"probs", c.prediction.probs}}},
                           {"priority", c.priority_score},
                           {"case", to_json(c, t)}});
    });
  });

  srv.Get("/cases", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string status = req.has_param("status") ? req.get_param_value("status") : "";
      const LabelTaxonomy& t = self->service.taxonomy();
      if (status == "pending") {
        send_json(res, 200, case_list(self->service.pending_queue(), t));
      } else if (status.empty()) {
        send_json(res, 200, case_list(self->service.cases(), t));
      } else if (status == "reviewed") {
        std::vector<Case> reviewed;
        for (auto& c : self->service.cases()) {
          if (c.status == CaseStatus::reviewed) reviewed.push_back(std::move(c));
        }
        send_json(res, 200, case_list(reviewed, t));
      } else {
        throw InvalidArgument("status must be 'pending' or 'reviewed'");
      }
    });
  });

  srv.Get(R"(/cases/([^/]+))", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(self->service.get_case(req.matches[1]), self->service.taxonomy())); });
  });

  srv.Get(R"(/cases/([^/]+)/explanation)", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string method = req.has_param("method") ? req.get_param_value("method") : "gradcam";
      std::optional<std::string> target;
      if (req.has_param("target")) target = req.get_param_value("target");
      const auto e = self->service.explanation(req.matches[1], method, target);
      send_json(res, 200, to_json(*e));
    });
  });

  srv.Post(R"(/cases/([^/]+)/review)", [self](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.is_object()) throw InvalidArgument("review body must be a JSON object");
      ReviewRequest r;
      r.decision = body.value("decision", "");
      if (body.contains("override_category") && body.at("override_category").is_string()) {
        r.override_category = body.at("override_category").get<std::string>();
      }
      r.note = body.value("note", "");
      send_json(res, 200, to_json(self->service.review_case(req.matches[1], r), self->service.taxonomy()));
    });
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

std::optional<std::string> token_from_environment() {
  const char* t = std::getenv("NAILGUARD_TOKEN");
  if (t == nullptr || *t == '\0') return std::nullopt;
  return std::string(t);
}

}  // namespace nailguard
