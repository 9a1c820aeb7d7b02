#include "mlbcap/backends.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"

namespace mlbcap {

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::Mock ? "mock" : "http_chat";
}

void BackendConfig::validate() const {
  if (backend_id.empty()) throw Error(ErrorCode::Config, "backend_id must be set");
  if (!(temperature >= 0.0)) {
    throw Error(ErrorCode::Config, backend_id + ": temperature must be >= 0");
  }
  if (max_retries < 0) throw Error(ErrorCode::Config, backend_id + ": max_retries must be >= 0");
  if (max_in_flight < 1 || max_in_flight > 1024) {
    throw Error(ErrorCode::Config, backend_id + ": max_in_flight must be in [1,1024]");
  }
  if (kind == BackendKind::HttpChat && (endpoint_url.empty() || model_name.empty())) {
    throw Error(ErrorCode::Config, backend_id + ": http_chat needs endpoint_url and model_name");
  }
}

std::string BackendConfig::fingerprint() const {
  nlohmann::json j{{"kind", to_string(kind)},
                   {"endpoint", endpoint_url},
                   {"model", model_name},
                   {"temperature", temperature},
                   {"seed", seed},
                   {"system", system_prompt}};
  return sha256_hex(j.dump()).substr(0, 16);
}

Backend::Backend(BackendConfig config)
    : config_(std::move(config)), permits_(config_.max_in_flight) {
  config_.validate();
}

CompletionResult Backend::complete(const RenderedPrompt& prompt) {
  if (prompt.image_ref && !config_.supports_images) {
    throw Error(ErrorCode::CapabilityError,
                config_.backend_id + " does not accept images (" +
                    std::string(to_string(prompt.template_id)) + ")");
  }
  permits_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{permits_};
  return do_complete(prompt);
}

// ---------------------------------------------------------------------------
// Mock

namespace {

constexpr std::array<std::string_view, 48> kVocabulary{
    "accuracy", "baseline", "model",     "training", "loss",       "curve",
    "results",  "dataset",  "proposed",  "method",   "improves",   "compared",
    "across",   "layers",   "attention", "error",    "rate",       "increases",
    "decreases", "performance", "samples", "epochs", "validation", "test",
    "benchmark", "shows",   "higher",    "lower",    "scores",     "distribution",
    "network",  "parameters", "latency", "throughput", "ablation", "variants",
    "consistently", "outperforms", "settings", "robust", "noise",  "levels",
    "metric",   "average",  "standard",  "deviation", "runs",      "trend"};

// splitmix64 step; drives all synthetic text.
std::uint64_t next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string synthetic_sentence(std::uint64_t& state, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    auto word = kVocabulary[next(state) % kVocabulary.size()];
    if (i) out.push_back(' ');
    if (i == 0) {
      out.push_back(static_cast<char>(word[0] - 'a' + 'A'));
      out.append(word.substr(1));
    } else {
      out.append(word);
    }
  }
  out.push_back('.');
  return out;
}

std::string synthetic_caption(std::uint64_t& state, std::size_t total_words) {
  const std::size_t first = std::max<std::size_t>(1, total_words / 3);
  std::string out = "Fig. " + std::to_string(1 + next(state) % 9) + ". ";
  const std::size_t remaining = total_words > first + 2 ? total_words - first - 2 : 1;
  out.append(synthetic_sentence(state, first));
  out.push_back(' ');
  out.append(synthetic_sentence(state, remaining));
  return out;
}

// Replies come in a few shapes seen from real models: bare JSON, fenced
// JSON, and JSON preceded by prose.
std::string wrap_json(const nlohmann::json& j, std::uint64_t& state) {
  switch (next(state) % 3) {
    case 0: return j.dump();
    case 1: return "```json\n" + j.dump(2) + "\n```";
    default: return "Here is the answer:\n" + j.dump();
  }
}

}  // namespace

MockBackend::MockBackend(BackendConfig config) : Backend(std::move(config)) {}

std::string MockBackend::reply_for(const RenderedPrompt& prompt) const {
  const std::string material = std::to_string(config().seed) + '\x1f' +
                               std::string(to_string(prompt.template_id)) + '\x1f' +
                               sha256_hex(prompt.text);
  const std::uint64_t h = sha256_u64(material);
  std::uint64_t state = h;

  switch (prompt.template_id) {
    case TemplateId::QualityAssessment:
      return wrap_json({{"rating", static_cast<int>(1 + h % 6)}}, state);
    case TemplateId::DescriptionLarge:
      return wrap_json({{"description", synthetic_sentence(state, 12 + next(state) % 20)}}, state);
    case TemplateId::DescriptionSimple:
      return "The image contains " + synthetic_sentence(state, 10 + next(state) % 15);
    case TemplateId::CaptionFewshot:
    case TemplateId::CaptionPlain:
      return wrap_json({{"caption", synthetic_caption(state, 15 + next(state) % 30)}}, state);
    case TemplateId::Summary:
      return synthetic_caption(state, 8 + next(state) % 15);
    case TemplateId::Judgement: {
      const std::uint64_t good = h % 4;
      const std::uint64_t bad = (good + 1 + (h >> 8) % 3) % 4;
      const char labels[] = "ABCD";
      nlohmann::json j{{"Good", std::string(1, labels[good])},
                       {"Bad", std::string(1, labels[bad])},
                       {"Improved Caption", synthetic_caption(state, 12 + next(state) % 45)}};
      return wrap_json(j, state);
    }
  }
  return {};
}

CompletionResult MockBackend::do_complete(const RenderedPrompt& prompt) {
  return {reply_for(prompt), config().backend_id, std::chrono::milliseconds{0}, 1};
}

std::chrono::milliseconds backoff_delay(int retry, std::chrono::milliseconds base, double jitter01) {
  if (retry < 1) retry = 1;
  const double cap = static_cast<double>(base.count()) * std::ldexp(1.0, std::min(retry - 1, 30));
  jitter01 = std::clamp(jitter01, 0.0, 1.0);
  return std::chrono::milliseconds{static_cast<std::int64_t>(cap / 2.0 + jitter01 * cap / 2.0)};
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config, HttpOptions options) {
  switch (config.kind) {
    case BackendKind::Mock: return std::make_unique<MockBackend>(config);
    case BackendKind::HttpChat: return std::make_unique<HttpChatBackend>(config, std::move(options));
  }
  throw Error(ErrorCode::Config, "unknown backend kind");
}

CompletionResult complete(const BackendConfig& config, const RenderedPrompt& prompt) {
  return make_backend(config)->complete(prompt);
}

}  // namespace mlbcap
