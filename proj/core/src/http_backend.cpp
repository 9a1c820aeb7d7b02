#include <httplib.h>

#include <cstdlib>
#include <random>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "mlbcap/backends.hpp"
#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap {
namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorCode::Config, "invalid endpoint_url: " + url);
  }
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

bool transient(int status) { return status == 429 || status >= 500; }

std::string mime_for(const std::filesystem::path& file) {
  auto ext = to_lower_ascii(file.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

std::string image_data_url(const std::filesystem::path& file) {
  return "data:" + mime_for(file) + ";base64," + base64_encode(read_file(file));
}

nlohmann::json build_chat_request(const BackendConfig& config, const RenderedPrompt& prompt,
                                  std::string_view data_url) {
  nlohmann::json user_content;
  if (data_url.empty()) {
    user_content = prompt.text;
  } else {
    user_content = nlohmann::json::array(
        {{{"type", "text"}, {"text", prompt.text}},
         {{"type", "image_url"}, {"image_url", {{"url", std::string(data_url)}}}}});
  }
  return {{"model", config.model_name},
          {"temperature", config.temperature},
          {"messages", nlohmann::json::array(
                           {{{"role", "system"}, {"content", config.system_prompt}},
                            {{"role", "user"}, {"content", user_content}}})}};
}

HttpChatBackend::HttpChatBackend(BackendConfig config, HttpOptions options)
    : Backend(std::move(config)), options_(std::move(options)) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.jitter) {
    options_.jitter = [] {
      thread_local std::mt19937_64 rng{std::random_device{}()};
      return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    };
  }
  split_url(this->config().endpoint_url);
}

CompletionResult HttpChatBackend::do_complete(const RenderedPrompt& prompt) {
  const auto& cfg = config();
  const auto endpoint = split_url(cfg.endpoint_url);

  std::string data_url;
  if (prompt.image_ref) {
    std::filesystem::path file(*prompt.image_ref);
    if (file.is_relative() && !options_.image_root.empty()) file = options_.image_root / file;
    data_url = image_data_url(file);
  }
  const std::string body = build_chat_request(cfg, prompt, data_url).dump();

  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    } else {
      spdlog::warn("{}: credential variable {} is not set", cfg.backend_id, cfg.api_key_env);
    }
  }

  httplib::Client client(endpoint.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const auto start = std::chrono::steady_clock::now();
  std::string last_failure;
  for (int attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
    if (attempt > 1) options_.sleep(backoff_delay(attempt - 1, options_.backoff_base, options_.jitter()));

    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (!res) {
      last_failure = "network error: " + httplib::to_string(res.error());
    } else if (transient(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
    } else if (res->status < 200 || res->status >= 300) {
      throw BackendRejected(res->status, cfg.backend_id + " rejected request: HTTP " +
                                             std::to_string(res->status) + " " + res->body);
    } else {
      auto reply = nlohmann::json::parse(res->body, nullptr, false);
      if (reply.is_discarded()) {
        throw BackendRejected(res->status, cfg.backend_id + ": reply body is not JSON");
      }
      try {
        auto text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        return {std::move(text), cfg.backend_id,
                std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start),
                attempt};
      } catch (const nlohmann::json::exception&) {
        throw BackendRejected(res->status, cfg.backend_id + ": reply lacks choices[0].message.content");
      }
    }
    spdlog::warn("{}: attempt {} failed ({})", cfg.backend_id, attempt, last_failure);
  }
  throw Error(ErrorCode::BackendUnavailable,
              cfg.backend_id + ": retries exhausted after " + std::to_string(cfg.max_retries + 1) +
                  " attempts (" + last_failure + ")");
}

}  // namespace mlbcap
