#include "mlbcap/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <utility>

#include <spdlog/spdlog.h>

#include "mlbcap/error.hpp"
#include "mlbcap/random.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap {
namespace {

std::string required_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedLine,
                std::string("missing or non-string key '") + key + "'");
  }
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw Error(ErrorCode::MalformedLine, std::string("key '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_array()) {
    throw Error(ErrorCode::MalformedLine, std::string("key '") + key + "' must be an array");
  }
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_string()) {
      throw Error(ErrorCode::MalformedLine,
                  std::string("key '") + key + "' must contain only strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

FigureRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedLine, "line is not a JSON object");
  FigureRecord r;
  r.figure_id = required_string(j, "figure_id");
  if (r.figure_id.empty()) throw Error(ErrorCode::MalformedLine, "empty figure_id");
  r.paper_id = required_string(j, "paper_id");
  r.caption = required_string(j, "caption");
  r.subject = optional_string(j, "subject");
  r.figure_type = optional_string(j, "figure_type");
  r.paragraphs = string_array(j, "paragraphs");
  r.mentions = string_array(j, "mentions");
  // Mentions must be nonempty; blank entries in noisy source data are dropped.
  std::erase_if(r.mentions, [](const std::string& m) { return trim(m).empty(); });
  r.ocr_text = optional_string(j, "ocr_text");
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::MalformedLine, "image_ref must be string or null");
    r.image_ref = it->get<std::string>();
  }
  return r;
}

nlohmann::json record_to_json(const FigureRecord& r) {
  nlohmann::json j;
  j["figure_id"] = r.figure_id;
  j["paper_id"] = r.paper_id;
  j["subject"] = r.subject;
  j["figure_type"] = r.figure_type;
  j["caption"] = r.caption;
  j["paragraphs"] = r.paragraphs;
  j["mentions"] = r.mentions;
  j["ocr_text"] = r.ocr_text;
  j["image_ref"] = r.image_ref ? nlohmann::json(*r.image_ref) : nlohmann::json(nullptr);
  return j;
}

QualityScore::QualityScore(int value, std::string rater)
    : value_(value), rater_(std::move(rater)) {
  if (value < 1 || value > 6) {
    throw Error(ErrorCode::RangeError, "quality score out of range: " + std::to_string(value));
  }
}

LoadResult load_corpus(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus " + path.string());

  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t nonblank = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++nonblank;
    try {
      result.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back({line_no, e.what()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
    if (strict && !result.errors.empty()) {
      const auto& err = result.errors.front();
      throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(err.line) +
                                                ": " + err.message);
    }
  }
  if (in.bad()) throw Error(ErrorCode::Io, "read failed: " + path.string());
  if (nonblank > 0 && result.records.empty()) {
    throw Error(ErrorCode::MalformedLine, "no well-formed records in " + path.string());
  }
  for (const auto& err : result.errors) {
    spdlog::warn("{}:{}: skipped malformed record: {}", path.string(), err.line, err.message);
  }
  return result;
}

std::vector<FigureRecord> dedup_by_paper(const std::vector<FigureRecord>& records) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<FigureRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (seen.emplace(r.paper_id, r.figure_id).second) out.push_back(r);
  }
  return out;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::NoPeriod: return "NO_PERIOD";
    case RejectReason::TooLong: return "TOO_LONG";
    case RejectReason::SingleSentence: return "SINGLE_SENTENCE";
  }
  return "UNKNOWN";
}

PreprocessResult filter_preprocess(const std::vector<FigureRecord>& records) {
  PreprocessResult out;
  for (const auto& r : records) {
    const std::string_view caption = trim_right(r.caption);
    if (caption.empty() || caption.back() != '.') {
      out.rejected.push_back({r, RejectReason::NoPeriod});
    } else if (word_count(caption) > kMaxCaptionWords) {
      out.rejected.push_back({r, RejectReason::TooLong});
    } else if (sentence_count(caption) <= 1) {
      out.rejected.push_back({r, RejectReason::SingleSentence});
    } else {
      out.kept.push_back(r);
    }
  }
  return out;
}

std::vector<ScoredRecord> filter_quality(const std::vector<ScoredRecord>& scored,
                                         int threshold) {
  if (threshold < 1 || threshold > 6) {
    throw Error(ErrorCode::RangeError, "quality threshold must be in [1,6]");
  }
  std::vector<ScoredRecord> out;
  for (const auto& s : scored) {
    if (s.score.value() >= threshold) out.push_back(s);
  }
  return out;
}

FewShotSet select_fewshot(const std::vector<ScoredRecord>& pool,
                          const std::string& subject, std::size_t k,
                          std::uint64_t seed) {
  std::vector<const ScoredRecord*> matches;
  std::set<std::string> ids;
  for (const auto& s : pool) {
    if (s.score.value() == kTopScore && s.record.subject == subject &&
        ids.insert(s.record.figure_id).second) {
      matches.push_back(&s);
    }
  }
  std::sort(matches.begin(), matches.end(), [](const auto* a, const auto* b) {
    return a->record.figure_id < b->record.figure_id;
  });

  const std::size_t take = std::min(k, matches.size());
  if (take < k) {
    spdlog::warn("few-shot pool for subject '{}' has {} of {} requested examples",
                 subject, matches.size(), k);
  }
  std::mt19937_64 rng(seed);
  partial_shuffle(matches, take, rng);

  FewShotSet set;
  set.seed = seed;
  for (std::size_t i = 0; i < take; ++i) {
    const auto& r = matches[i]->record;
    set.examples.push_back({r.figure_id, r.caption, r.subject});
  }
  return set;
}

}  // namespace mlbcap
