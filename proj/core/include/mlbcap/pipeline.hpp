#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlbcap/backends.hpp"
#include "mlbcap/cache.hpp"
#include "mlbcap/candidates.hpp"
#include "mlbcap/config.hpp"
#include "mlbcap/corpus.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/prompts.hpp"

namespace mlbcap {

struct StageFailure {
  std::string figure_id;
  std::string stage;
  ErrorCode code;
  std::string message;
};

nlohmann::json to_json(const StageFailure& failure);

struct StageOptions {
  std::size_t token_limit = kDefaultTokenLimit;
  ResponseCache* cache = nullptr;
  std::filesystem::path image_root;
  bool judge_image = false;
  int workers = 1;
};

// ---------------------------------------------------------------------------
// Quality assessment

/// Reads {"rating": r} from a reply and clamps r into [1, 6]. `clamped` is set
/// when the model answered out of range. Throws PARSE_* errors.
int parse_rating(std::string_view reply, bool* clamped = nullptr);

struct AssessOutcome {
  std::vector<ScoredRecord> scored;  // input order, failures omitted
  std::vector<StageFailure> failures;
  std::size_t clamped = 0;
};

AssessOutcome assess_quality(const std::vector<FigureRecord>& records, Backend& rater,
                             const StageOptions& options = {});

/// Records rated 5 or 6.
std::vector<ScoredRecord> build_dhigh(const std::vector<ScoredRecord>& scored);

inline constexpr int kHighQualityThreshold = 5;

// ---------------------------------------------------------------------------
// Description, candidates, judgement

struct FigureDescription {
  std::string text;
  std::string backend_id;
};

/// Throws Error(ImageRequired) when the record has no image.
FigureDescription describe_figure(const FigureRecord& record, Backend& describer,
                                  DescribeStyle style, const StageOptions& options = {});

struct RoleBackends {
  std::array<Backend*, 4> by_label{};
  Backend& at(Label label) const;
};

/// Runs the four roles concurrently. A gets the summary prompt, B and C the
/// caption prompt without examples, D the caption prompt with `fewshot`.
/// Throws Error(CandidatesIncomplete) naming the first failed label.
CandidateSet generate_candidates(const FigureRecord& record, std::string_view description,
                                 const FewShotSet& fewshot, const RoleBackends& roles,
                                 const StageOptions& options = {});

struct JudgmentResult {
  std::string figure_id;
  Label good = Label::A;
  Label bad = Label::B;
  std::string improved_caption;
  Track track;
  bool word_count_ok = false;
  bool reasked = false;
  std::string raw_reply;
};

struct ParsedJudgment {
  Label good;
  Label bad;
  std::string improved_caption;
};

/// Throws JUDGE_PARSE, JUDGE_LABEL or JUDGE_CONFLICT.
ParsedJudgment parse_judgment(std::string_view reply);

/// Text appended to the judgement prompt when the improved caption is too long.
std::string word_limit_reminder(std::size_t words, int max_len);

/// Selects best/worst and post-edits. An over-long improved caption triggers
/// exactly one re-ask; the final caption is never truncated.
JudgmentResult judge(const CandidateSet& candidates, std::string_view description,
                     const FigureRecord& record, Backend& judge_backend, const Track& track,
                     const StageOptions& options = {});

/// Percentage of judgements whose best label maps to each role. Throws
/// Error(EmptyInput) on an empty list.
std::map<Label, double> best_source_share(const std::vector<JudgmentResult>& judgments);

// ---------------------------------------------------------------------------
// Artifact-level stages. Each stage reads its inputs from and writes its
// outputs to an output directory, so `run` is exactly the composition
// ingest -> assess -> generate -> judge.
//
//   kept.jsonl, rejected.jsonl       ingest
//   scores.jsonl, histogram.json     assess
//   candidates.jsonl                 generate
//   results.jsonl                    judge
//   failures/<stage>.jsonl           per-figure failures of each stage
//   manifest.json                    run metadata (timing, cache counters)

namespace files {
inline constexpr std::string_view kKept = "kept.jsonl";
inline constexpr std::string_view kRejected = "rejected.jsonl";
inline constexpr std::string_view kScores = "scores.jsonl";
inline constexpr std::string_view kHistogram = "histogram.json";
inline constexpr std::string_view kCandidates = "candidates.jsonl";
inline constexpr std::string_view kResults = "results.jsonl";
inline constexpr std::string_view kManifest = "manifest.json";
inline constexpr std::string_view kFailuresDir = "failures";
}  // namespace files

struct StageReport {
  std::string stage;
  std::vector<std::string> figure_ids;  // figures the stage processed, in order
  std::vector<StageFailure> failures;
  nlohmann::json summary = nlohmann::json::object();
  double elapsed_ms = 0;
};

struct FigureStatus {
  std::string figure_id;
  bool done = false;
  std::string failed_stage;
  ErrorCode error = ErrorCode::Io;
  std::string message;
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::string track;
  std::vector<StageReport> stages;
  std::map<std::string, StageCounts> cache;
  std::vector<FigureStatus> figures;
  double elapsed_ms = 0;

  bool has_failures() const;
  nlohmann::json to_json() const;
};

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);

/// load -> dedup -> filter_preprocess; writes kept/rejected.
StageReport ingest_corpus(const std::filesystem::path& corpus_path,
                          const std::filesystem::path& out_dir);

/// Owns the backends and cache for one output directory.
class PipelineRunner {
 public:
  PipelineRunner(PipelineConfig config, std::filesystem::path out_dir,
                 std::filesystem::path image_root = {});
  ~PipelineRunner();
  PipelineRunner(const PipelineRunner&) = delete;
  PipelineRunner& operator=(const PipelineRunner&) = delete;

  /// Rates kept.jsonl; writes scores and the histogram.
  StageReport assess();
  /// Describes and generates candidates for every test figure.
  StageReport generate(const std::filesystem::path& corpus_path);
  /// Judges every figure in candidates.jsonl.
  StageReport judge(const std::filesystem::path& corpus_path, const Track& track);

  /// Manifest for the stages run so far.
  RunManifest manifest(const std::vector<StageReport>& stages, const Track& track) const;

  const PipelineConfig& config() const noexcept { return config_; }
  ResponseCache& cache() noexcept { return *cache_; }

  /// Test figures: the configured test corpus, else the deduplicated corpus.
  std::vector<FigureRecord> test_figures(const std::filesystem::path& corpus_path) const;

 private:
  StageOptions options() const;
  Backend& backend_for(const BackendConfig& cfg);

  PipelineConfig config_;
  std::filesystem::path out_dir_;
  std::filesystem::path image_root_;
  std::unique_ptr<ResponseCache> cache_;
  std::map<std::string, std::unique_ptr<Backend>> backends_;
};

/// End to end: ingest, assess, generate, judge, then manifest.json.
RunManifest run_pipeline(const std::filesystem::path& corpus_path, const PipelineConfig& config,
                         const Track& track, const std::filesystem::path& out_dir);

}  // namespace mlbcap
