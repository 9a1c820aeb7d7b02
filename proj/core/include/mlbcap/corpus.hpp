#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mlbcap {

/// One figure together with the paper-derived context used to caption it.
struct FigureRecord {
  std::string figure_id;
  std::string paper_id;
  std::string subject;      // subject category, e.g. "cs.AI"
  std::string figure_type;  // e.g. "bar chart"
  std::string caption;      // author-written caption
  std::vector<std::string> paragraphs;
  std::vector<std::string> mentions;
  std::string ocr_text;
  std::optional<std::string> image_ref;

  friend bool operator==(const FigureRecord&, const FigureRecord&) = default;
};

/// Throws Error(MalformedLine) when required keys are missing or mistyped.
FigureRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const FigureRecord& record);

/// Usefulness rating on the 1..6 scale.
class QualityScore {
 public:
  /// Throws Error(RangeError) outside [1, 6].
  QualityScore(int value, std::string rater);

  int value() const noexcept { return value_; }
  const std::string& rater() const noexcept { return rater_; }

  friend bool operator==(const QualityScore&, const QualityScore&) = default;

 private:
  int value_;
  std::string rater_;
};

struct ScoredRecord {
  FigureRecord record;
  QualityScore score;
};

struct FewShotExample {
  std::string figure_id;
  std::string caption;
  std::string subject;
};

struct FewShotSet {
  std::vector<FewShotExample> examples;
  std::uint64_t seed = 0;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<FigureRecord> records;
  std::vector<LineError> errors;
};

/// Reads line-delimited JSON records. Blank lines are skipped. Malformed lines
/// are collected in `errors`; in strict mode the first one throws instead.
/// Throws Error(Io) if the file cannot be read and Error(MalformedLine) if no
/// line parses while at least one was present.
LoadResult load_corpus(const std::filesystem::path& path, bool strict = false);

/// Keeps the first occurrence of each (paper_id, figure_id) pair.
std::vector<FigureRecord> dedup_by_paper(const std::vector<FigureRecord>& records);

enum class RejectReason { NoPeriod, TooLong, SingleSentence };

std::string_view to_string(RejectReason reason);

struct Rejection {
  FigureRecord record;
  RejectReason reason;
};

struct PreprocessResult {
  std::vector<FigureRecord> kept;
  std::vector<Rejection> rejected;
};

inline constexpr std::size_t kMaxCaptionWords = 100;

/// Applies the caption rules in fixed precedence: no final period, more than
/// kMaxCaptionWords words, a single sentence.
PreprocessResult filter_preprocess(const std::vector<FigureRecord>& records);

/// Records with score >= threshold, order preserved. Threshold must be 1..6.
std::vector<ScoredRecord> filter_quality(const std::vector<ScoredRecord>& scored,
                                         int threshold);

inline constexpr int kTopScore = 6;
inline constexpr std::size_t kFewShotSize = 10;

/// Uniformly samples min(k, available) score-6 records of `subject`. Matches
/// are sorted by figure_id before sampling so the result depends only on the
/// pool contents and seed.
FewShotSet select_fewshot(const std::vector<ScoredRecord>& pool,
                          const std::string& subject, std::size_t k,
                          std::uint64_t seed);

}  // namespace mlbcap
