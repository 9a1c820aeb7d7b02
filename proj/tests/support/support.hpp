#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlbcap/backends.hpp"

namespace mlbcap::testing {

std::filesystem::path fixture(const std::string& relative);
std::filesystem::path template_dir();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

BackendConfig mock_config(const std::string& id, std::uint64_t seed, bool images = false);

/// Replies from a queue, one per call; records every prompt it receives.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend(std::string id, std::vector<std::string> replies, bool images = true);

  std::vector<RenderedPrompt> prompts() const;
  std::size_t calls() const;

 protected:
  CompletionResult do_complete(const RenderedPrompt& prompt) override;

 private:
  mutable std::mutex mu_;
  std::deque<std::string> replies_;
  std::vector<RenderedPrompt> prompts_;
};

/// OpenAI-style chat endpoint on 127.0.0.1 that answers the first
/// `failures` requests with `failure_status`, then succeeds with `content`.
class FakeProvider {
 public:
  FakeProvider(int failures, int failure_status, std::string content);
  ~FakeProvider();
  FakeProvider(const FakeProvider&) = delete;
  FakeProvider& operator=(const FakeProvider&) = delete;

  std::string url() const;
  int requests() const;
  std::vector<nlohmann::json> bodies() const;
  std::vector<std::string> authorization_headers() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

HttpReply http_get(int port, const std::string& path, const std::string& bearer = {});
HttpReply http_post(int port, const std::string& path, const std::string& body);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace mlbcap::testing

namespace mlbcap::testing {

/// Runs a full annotation session over HTTP (three judges, every task, both
/// modes, plus error paths) and scans every client-facing response body for
/// backend ids, role names and source labels. Returns the violations found
/// and the number of responses scanned.
struct DeidScan {
  std::size_t responses = 0;
  std::vector<std::string> violations;
};
DeidScan deidentification_session();

}  // namespace mlbcap::testing
