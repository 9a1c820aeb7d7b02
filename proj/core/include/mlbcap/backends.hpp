#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mlbcap/prompts.hpp"

namespace mlbcap {

enum class BackendKind { Mock, HttpChat };

std::string_view to_string(BackendKind kind);

struct BackendConfig {
  std::string backend_id;
  BackendKind kind = BackendKind::Mock;
  std::string endpoint_url;  // HttpChat only
  std::string model_name;
  double temperature = 0.0;  // 0 stands in for greedy decoding
  int max_retries = 3;
  std::chrono::milliseconds timeout{60'000};
  std::string api_key_env;  // name of the variable holding the credential
  bool supports_images = false;
  std::uint64_t seed = 0;  // Mock only
  std::string system_prompt = "You are a helpful assistant.";
  int max_in_flight = 4;

  /// Throws Error(Config) on violated invariants.
  void validate() const;
  /// Digest of the fields that influence replies; part of cache keys.
  std::string fingerprint() const;
};

struct CompletionResult {
  std::string text;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
};

/// Opaque completion endpoint. complete() is safe to call concurrently; at most
/// config().max_in_flight calls proceed at once.
class Backend {
 public:
  explicit Backend(BackendConfig config);
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  /// Throws Error(CapabilityError) when an image is attached to a backend
  /// without image support.
  CompletionResult complete(const RenderedPrompt& prompt);

  const BackendConfig& config() const noexcept { return config_; }

 protected:
  virtual CompletionResult do_complete(const RenderedPrompt& prompt) = 0;

 private:
  BackendConfig config_;
  std::counting_semaphore<1024> permits_;
};

/// Deterministic offline backend: replies are a pure function of
/// (seed, template id, prompt text).
class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendConfig config);

  /// The reply without going through permits or capability checks.
  std::string reply_for(const RenderedPrompt& prompt) const;

 protected:
  CompletionResult do_complete(const RenderedPrompt& prompt) override;
};

/// Backoff before retry number `retry` (1-based): a jittered delay in
/// [base*2^(retry-1)/2, base*2^(retry-1)], so successive delays never shrink.
std::chrono::milliseconds backoff_delay(int retry, std::chrono::milliseconds base, double jitter01);

struct HttpOptions {
  std::chrono::milliseconds backoff_base{500};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
  std::function<double()> jitter;                        // uniform [0,1)
  std::filesystem::path image_root;                      // resolves relative image refs
};

/// OpenAI-compatible chat completions client.
class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig config, HttpOptions options = {});

 protected:
  CompletionResult do_complete(const RenderedPrompt& prompt) override;

 private:
  HttpOptions options_;
};

/// Request body for a chat-completions call. `image_data_url` is attached as an
/// image content part when nonempty.
nlohmann::json build_chat_request(const BackendConfig& config, const RenderedPrompt& prompt,
                                  std::string_view image_data_url = {});

/// "data:<mime>;base64,<payload>" for the file's bytes.
std::string image_data_url(const std::filesystem::path& file);

std::unique_ptr<Backend> make_backend(const BackendConfig& config, HttpOptions options = {});

/// One-shot convenience wrapper around make_backend(config)->complete(prompt).
CompletionResult complete(const BackendConfig& config, const RenderedPrompt& prompt);

struct JsonExtraction {
  nlohmann::json value;
  std::size_t begin = 0;  // span [begin, end) in the input
  std::size_t end = 0;
};

/// Finds the first balanced {...} region that parses as JSON, tolerating
/// surrounding prose and code fences. Throws Error(ParseNoObject) when no
/// region balances and Error(ParseInvalid) when none of them parse.
JsonExtraction extract_json_object(std::string_view text);

}  // namespace mlbcap
