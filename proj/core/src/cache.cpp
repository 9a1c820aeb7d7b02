#include "mlbcap/cache.hpp"

#include <nlohmann/json.hpp>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"

namespace mlbcap {

std::string CacheKey::hex() const {
  nlohmann::json j{{"stage", stage},
                   {"backend_id", backend_id},
                   {"model", model_name},
                   {"fingerprint", backend_fingerprint},
                   {"prompt", prompt_digest},
                   {"image", image_digest}};
  return sha256_hex(j.dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& hex) const {
  return dir_ / hex.substr(0, 2) / (hex + ".json");
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) {
  const auto path = entry_path(key.hex());
  std::optional<std::string> found;
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    try {
      auto j = nlohmann::json::parse(read_file(path));
      found = j.at("text").get<std::string>();
    } catch (const std::exception&) {
      // Unreadable entries count as misses and get rewritten.
    }
  }
  std::lock_guard lock(mu_);
  auto& counts = stats_[key.stage];
  (found ? counts.hits : counts.misses) += 1;
  return found;
}

void ResponseCache::put(const CacheKey& key, std::string_view text) {
  nlohmann::json j{{"stage", key.stage},
                   {"backend_id", key.backend_id},
                   {"model", key.model_name},
                   {"fingerprint", key.backend_fingerprint},
                   {"prompt_digest", key.prompt_digest},
                   {"image_digest", key.image_digest},
                   {"text", std::string(text)}};
  write_file_atomic(entry_path(key.hex()), j.dump(2) + "\n");
}

std::map<std::string, StageCounts> ResponseCache::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::string image_digest(const std::optional<std::string>& image_ref,
                         const std::filesystem::path& image_root) {
  if (!image_ref) return {};
  std::filesystem::path file(*image_ref);
  if (file.is_relative() && !image_root.empty()) file = image_root / file;
  try {
    return sha256_hex(read_file(file));
  } catch (const Error&) {
    return sha256_hex("ref:" + *image_ref);
  }
}

CompletionResult cached_complete(ResponseCache* cache, Backend& backend, std::string_view stage,
                                 const RenderedPrompt& prompt,
                                 const std::filesystem::path& image_root) {
  if (!cache) return backend.complete(prompt);
  const auto& cfg = backend.config();
  // Capability errors must surface even when a reply is cached.
  if (prompt.image_ref && !cfg.supports_images) return backend.complete(prompt);

  CacheKey key{std::string(stage),          cfg.backend_id,
               cfg.model_name,              cfg.fingerprint(),
               sha256_hex(prompt.text),     image_digest(prompt.image_ref, image_root)};
  if (auto text = cache->get(key)) {
    return {std::move(*text), cfg.backend_id, std::chrono::milliseconds{0}, 1};
  }
  auto result = backend.complete(prompt);
  cache->put(key, result.text);
  return result;
}

}  // namespace mlbcap
