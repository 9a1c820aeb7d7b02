#include "support.hpp"

#include <httplib.h>

#include <atomic>
#include <random>
#include <sstream>

#include "mlbcap/digest.hpp"

namespace mlbcap::testing {

std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(MLBCAP_FIXTURE_DIR) / relative;
}

std::filesystem::path template_dir() { return MLBCAP_TEMPLATE_DIR; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("mlbcap-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

BackendConfig mock_config(const std::string& id, std::uint64_t seed, bool images) {
  BackendConfig c;
  c.backend_id = id;
  c.model_name = id + "-model";
  c.seed = seed;
  c.supports_images = images;
  return c;
}

ScriptedBackend::ScriptedBackend(std::string id, std::vector<std::string> replies, bool images)
    : Backend(mock_config(std::move(id), 0, images)), replies_(replies.begin(), replies.end()) {}

std::vector<RenderedPrompt> ScriptedBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

CompletionResult ScriptedBackend::do_complete(const RenderedPrompt& prompt) {
  std::lock_guard lock(mu_);
  prompts_.push_back(prompt);
  if (replies_.empty()) throw std::logic_error("scripted backend ran out of replies");
  CompletionResult r;
  r.text = replies_.front();
  if (replies_.size() > 1) replies_.pop_front();
  r.backend_id = config().backend_id;
  return r;
}

struct FakeProvider::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mu;
  std::vector<nlohmann::json> bodies;
  std::vector<std::string> auth;
};

FakeProvider::FakeProvider(int failures, int failure_status, std::string content)
    : impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/v1/chat/completions", [this, failures, failure_status, content](
                                                   const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(impl_->mu);
    impl_->bodies.push_back(nlohmann::json::parse(req.body, nullptr, false));
    impl_->auth.push_back(req.get_header_value("Authorization"));
    if (static_cast<int>(impl_->bodies.size()) <= failures) {
      res.status = failure_status;
      res.set_content(R"({"error":{"message":"slow down"}})", "application/json");
      return;
    }
    nlohmann::json reply{{"id", "cmpl-1"},
                         {"object", "chat.completion"},
                         {"choices", {{{"index", 0},
                                       {"message", {{"role", "assistant"}, {"content", content}}},
                                       {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

FakeProvider::~FakeProvider() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string FakeProvider::url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port) + "/v1/chat/completions";
}

int FakeProvider::requests() const {
  std::lock_guard lock(impl_->mu);
  return static_cast<int>(impl_->bodies.size());
}

std::vector<nlohmann::json> FakeProvider::bodies() const {
  std::lock_guard lock(impl_->mu);
  return impl_->bodies;
}

std::vector<std::string> FakeProvider::authorization_headers() const {
  std::lock_guard lock(impl_->mu);
  return impl_->auth;
}

HttpReply http_get(int port, const std::string& path, const std::string& bearer) {
  httplib::Client client("127.0.0.1", port);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  auto res = client.Get(path, headers);
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

HttpReply http_post(int port, const std::string& path, const std::string& body) {
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post(path, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

}  // namespace mlbcap::testing
