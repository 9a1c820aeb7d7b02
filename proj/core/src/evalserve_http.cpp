#include <httplib.h>

#include <spdlog/spdlog.h>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/evalserve.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap::evalserve {
namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Validation:
      return 400;
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::Degenerate:
    case ErrorCode::ShapeError:
      return 422;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, status_for(code), {{"code", to_string(code)}, {"message", message}});
}

std::string judge_param(const httplib::Request& req) {
  auto judge = req.get_param_value("judge");
  if (trim(judge).empty()) throw Error(ErrorCode::Validation, "query parameter 'judge' is required");
  return judge;
}

nlohmann::json progress_json(const Progress& p) { return {{"answered", p.answered}, {"total", p.total}}; }

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = to_lower_ascii(p.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      spdlog::error("evalserve: {} {}: {}", req.method, req.path, e.what());
      send_json(res, 500, {{"code", "INTERNAL"}, {"message", "internal error"}});
    }
  };
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  ServerOptions options;
  httplib::Server server;

  Impl(AnnotationStore& s, ServerOptions o) : store(s), options(std::move(o)) { routes(); }

  void routes() {
    server.Get("/api/tasks/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto judge = judge_param(req);
      auto task = store.next_task(judge);
      nlohmann::json body{{"done", !task.has_value()}, {"progress", progress_json(store.progress(judge))}};
      body["task"] = task ? client_view(*task) : nlohmann::json(nullptr);
      send_json(res, 200, body);
    }));

    server.Post("/api/responses", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) throw Error(ErrorCode::Validation, "request body is not valid JSON");
      auto response = response_from_json(body);
      response.received_at.clear();
      const auto ack = store.submit(std::move(response));
      send_json(res, ack.duplicate ? 200 : 201, {{"task_id", ack.task_id}, {"duplicate", ack.duplicate}});
    }));

    server.Get("/api/progress", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, progress_json(store.progress(judge_param(req))));
    }));

    server.Get("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto auth = req.get_header_value("Authorization");
      if (options.operator_token.empty() || auth != "Bearer " + options.operator_token) {
        throw Error(ErrorCode::Unauthorized, "operator token required");
      }
      nlohmann::json body{{"annotations", to_json(store.export_annotations())}};
      try {
        body["agreement"] = to_json(store.export_agreement());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Degenerate) throw;
        body["agreement"] = nullptr;
        body["agreement_error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
      }
      send_json(res, 200, body);
    }));

    server.Get(R"(/api/figures/([^/]+)/image)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string figure_id = req.matches[1];
                 const AnnotationTask* task = nullptr;
                 for (const auto& t : store.tasks()) {
                   if (t.figure_id == figure_id) task = &t;
                 }
                 if (!task || !task->image_ref) throw Error(ErrorCode::NotFound, "no image for " + figure_id);
                 const auto rel = std::filesystem::path(*task->image_ref).lexically_normal();
                 if (rel.is_absolute() || (!rel.empty() && *rel.begin() == "..")) {
                   throw Error(ErrorCode::NotFound, "image outside image root");
                 }
                 const auto path = options.image_root / rel;
                 if (!std::filesystem::is_regular_file(path)) {
                   throw Error(ErrorCode::NotFound, "image file missing for " + figure_id);
                 }
                 res.set_content(read_file(path), content_type_for(path));
               }));

    if (options.static_dir) {
      if (!server.set_mount_point("/", options.static_dir->string())) {
        throw Error(ErrorCode::Config, "cannot serve static directory " + options.static_dir->string());
      }
    }
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace mlbcap::evalserve
