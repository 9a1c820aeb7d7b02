#include "mlbcap/config.hpp"

#include <set>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"

namespace mlbcap {
namespace {

void reject_unknown(const YAML::Node& node, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key, T fallback, const std::string& where) {
  if (!node[key]) return fallback;
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorCode::Config, "invalid value for '" + key + "' in " + where);
  }
}

BackendConfig parse_backend(const YAML::Node& node, const std::string& slot, int permits) {
  const std::string where = "backends." + slot;
  if (!node.IsMap()) throw Error(ErrorCode::Config, where + " must be a mapping");
  reject_unknown(node,
                 {"id", "kind", "endpoint", "model", "temperature", "max_retries", "timeout_ms",
                  "api_key_env", "supports_images", "seed", "system_prompt", "max_in_flight"},
                 where);
  BackendConfig b;
  b.backend_id = scalar<std::string>(node, "id", slot, where);
  const auto kind = scalar<std::string>(node, "kind", "mock", where);
  if (kind == "mock") {
    b.kind = BackendKind::Mock;
  } else if (kind == "http_chat") {
    b.kind = BackendKind::HttpChat;
  } else {
    throw Error(ErrorCode::Config, where + ": kind must be mock or http_chat");
  }
  b.endpoint_url = scalar<std::string>(node, "endpoint", "", where);
  b.model_name = scalar<std::string>(node, "model", b.backend_id, where);
  b.temperature = scalar<double>(node, "temperature", 0.0, where);
  b.max_retries = scalar<int>(node, "max_retries", 3, where);
  b.timeout = std::chrono::milliseconds{scalar<std::int64_t>(node, "timeout_ms", 60'000, where)};
  b.api_key_env = scalar<std::string>(node, "api_key_env", "", where);
  b.supports_images = scalar<bool>(node, "supports_images", false, where);
  b.seed = scalar<std::uint64_t>(node, "seed", 0, where);
  b.system_prompt = scalar<std::string>(node, "system_prompt", b.system_prompt, where);
  b.max_in_flight = scalar<int>(node, "max_in_flight", permits, where);
  b.validate();
  return b;
}

nlohmann::json backend_json(const BackendConfig& b) {
  return {{"id", b.backend_id},
          {"kind", to_string(b.kind)},
          {"endpoint", b.endpoint_url},
          {"model", b.model_name},
          {"temperature", b.temperature},
          {"max_retries", b.max_retries},
          {"timeout_ms", b.timeout.count()},
          {"api_key_env", b.api_key_env},
          {"supports_images", b.supports_images},
          {"seed", b.seed},
          {"system_prompt", b.system_prompt},
          {"max_in_flight", b.max_in_flight}};
}

}  // namespace

std::string PipelineConfig::digest() const {
  nlohmann::json j{{"rater", backend_json(rater)},
                   {"describer", backend_json(describer)},
                   {"judge", backend_json(judge)},
                   {"A", backend_json(roles[0])},
                   {"B", backend_json(roles[1])},
                   {"C", backend_json(roles[2])},
                   {"D", backend_json(roles[3])},
                   {"track", track},
                   {"max_len_long", max_len_long},
                   {"max_len_short", max_len_short},
                   {"token_limit", token_limit},
                   {"seed", seed},
                   {"fewshot_k", fewshot_k},
                   {"quality_threshold", quality_threshold},
                   {"judge_image", judge_image},
                   {"describe_style", describe_style == DescribeStyle::Large ? "large" : "simple"}};
  return sha256_hex(j.dump());
}

PipelineConfig parse_config(std::string_view yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::Config, std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) throw Error(ErrorCode::Config, "config must be a mapping");
  reject_unknown(root,
                 {"track", "seed", "judge_image", "describe_style", "cache_dir", "test_corpus",
                  "limits", "backends"},
                 "config");

  PipelineConfig c;
  c.track = scalar<std::string>(root, "track", c.track, "config");
  c.seed = scalar<std::uint64_t>(root, "seed", 0, "config");
  c.judge_image = scalar<bool>(root, "judge_image", false, "config");
  const auto style = scalar<std::string>(root, "describe_style", "large", "config");
  if (style == "large") {
    c.describe_style = DescribeStyle::Large;
  } else if (style == "simple") {
    c.describe_style = DescribeStyle::Simple;
  } else {
    throw Error(ErrorCode::Config, "describe_style must be large or simple");
  }
  c.cache_dir = scalar<std::string>(root, "cache_dir", "cache", "config");
  if (root["test_corpus"]) {
    std::filesystem::path p = scalar<std::string>(root, "test_corpus", "", "config");
    c.test_corpus = p.is_relative() ? base_dir / p : p;
  }

  if (const auto limits = root["limits"]) {
    reject_unknown(limits,
                   {"max_len_long", "max_len_short", "token_limit", "workers", "permits",
                    "fewshot_k", "quality_threshold"},
                   "limits");
    c.max_len_long = scalar<int>(limits, "max_len_long", 50, "limits");
    c.max_len_short = scalar<int>(limits, "max_len_short", 30, "limits");
    c.token_limit = scalar<std::size_t>(limits, "token_limit", 512, "limits");
    c.workers = scalar<int>(limits, "workers", 4, "limits");
    c.permits = scalar<int>(limits, "permits", 4, "limits");
    c.fewshot_k = scalar<std::size_t>(limits, "fewshot_k", 10, "limits");
    c.quality_threshold = scalar<int>(limits, "quality_threshold", 5, "limits");
  }
  if (c.max_len_long <= 0 || c.max_len_short <= 0) {
    throw Error(ErrorCode::Config, "max_len limits must be > 0");
  }
  if (c.token_limit == 0) throw Error(ErrorCode::Config, "token_limit must be > 0");
  if (c.workers < 1) throw Error(ErrorCode::Config, "workers must be >= 1");
  if (c.permits < 1) throw Error(ErrorCode::Config, "permits must be >= 1");
  if (c.quality_threshold < 1 || c.quality_threshold > 6) {
    throw Error(ErrorCode::Config, "quality_threshold must be in [1,6]");
  }
  if (c.track != "long" && c.track != "short") {
    throw Error(ErrorCode::Config, "track must be long or short");
  }

  const auto backends = root["backends"];
  if (!backends || !backends.IsMap()) throw Error(ErrorCode::Config, "config needs a backends mapping");
  reject_unknown(backends, {"rater", "describer", "judge", "A", "B", "C", "D"}, "backends");
  auto need = [&](const std::string& slot) {
    if (!backends[slot]) throw Error(ErrorCode::Config, "backends." + slot + " is required");
    return parse_backend(backends[slot], slot, c.permits);
  };
  c.rater = need("rater");
  c.describer = need("describer");
  c.judge = need("judge");
  c.roles = {need("A"), need("B"), need("C"), need("D")};
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

}  // namespace mlbcap
