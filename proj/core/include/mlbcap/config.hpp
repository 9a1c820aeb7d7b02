#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "mlbcap/backends.hpp"

namespace mlbcap {

enum class DescribeStyle { Large, Simple };

/// Everything a pipeline run needs, loaded from a YAML file:
///
///   track: long
///   seed: 7
///   judge_image: false
///   describe_style: large        # large | simple
///   cache_dir: cache             # relative to the output directory
///   test_corpus: test.jsonl      # optional; relative to the config file
///   limits: {max_len_long: 50, max_len_short: 30, token_limit: 512,
///            workers: 4, permits: 4, fewshot_k: 10, quality_threshold: 5}
///   backends:
///     rater:     {kind: mock, model: m, seed: 1, supports_images: true}
///     describer: {...}
///     judge:     {...}
///     A: {...}   B: {...}   C: {...}   D: {...}
///
/// Backend keys: id, kind (mock|http_chat), endpoint, model, temperature,
/// max_retries, timeout_ms, api_key_env, supports_images, seed,
/// system_prompt, max_in_flight. Unknown keys are rejected.
struct PipelineConfig {
  BackendConfig rater;
  BackendConfig describer;
  BackendConfig judge;
  std::array<BackendConfig, 4> roles;  // indexed by Label

  std::string track = "long";
  int max_len_long = 50;
  int max_len_short = 30;
  std::size_t token_limit = 512;
  int workers = 4;
  int permits = 4;
  std::uint64_t seed = 0;
  std::size_t fewshot_k = 10;
  int quality_threshold = 5;
  bool judge_image = false;
  DescribeStyle describe_style = DescribeStyle::Large;
  std::filesystem::path cache_dir = "cache";
  std::optional<std::filesystem::path> test_corpus;

  /// sha256 of the normalized configuration.
  std::string digest() const;
};

/// Throws Error(Config) on syntax errors, unknown keys or invalid values.
PipelineConfig parse_config(std::string_view yaml_text,
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace mlbcap
