#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "mlbcap/backends.hpp"

namespace mlbcap {

struct CacheKey {
  std::string stage;
  std::string backend_id;
  std::string model_name;
  std::string backend_fingerprint;
  std::string prompt_digest;  // sha256 of the prompt text
  std::string image_digest;   // empty when no image is attached

  /// Hex digest naming the entry on disk.
  std::string hex() const;
};

struct StageCounts {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

/// Content-addressed store of backend replies, laid out as
/// <dir>/<first two hex digits>/<digest>.json. Entries are published with an
/// atomic rename, so concurrent readers see a complete entry or none.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const CacheKey& key);
  void put(const CacheKey& key, std::string_view text);

  std::map<std::string, StageCounts> stats() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& hex) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, StageCounts> stats_;
};

/// Digest of an attached image: the file bytes when readable, else the locator.
std::string image_digest(const std::optional<std::string>& image_ref,
                         const std::filesystem::path& image_root);

/// Runs the prompt through the cache; a miss calls the backend and stores the
/// reply. `cache` may be null.
CompletionResult cached_complete(ResponseCache* cache, Backend& backend, std::string_view stage,
                                 const RenderedPrompt& prompt,
                                 const std::filesystem::path& image_root);

}  // namespace mlbcap
