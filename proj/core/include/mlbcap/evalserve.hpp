#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlbcap/candidates.hpp"
#include "mlbcap/prompts.hpp"

namespace mlbcap::evalserve {

enum class Mode { BestWorst, Rank };

std::string_view to_string(Mode mode);
/// "best_worst" or "rank"; throws Error(Config) otherwise.
Mode parse_mode(std::string_view name);

struct DisplayItem {
  std::string display_key;  // "1".."4"
  Label hidden_label;
  std::string text;
};

/// One figure's candidates, shown under display keys in a per-figure shuffled
/// order. Hidden labels stay on the server.
struct AnnotationTask {
  std::string task_id;
  std::string figure_id;
  std::optional<std::string> image_ref;
  std::vector<DisplayItem> shuffled;
  Mode mode = Mode::BestWorst;
  Track track;

  const DisplayItem* item(std::string_view display_key) const;
};

/// Client-facing JSON: display keys and texts only.
nlohmann::json client_view(const AnnotationTask& task);

struct TaskSource {
  std::string figure_id;
  std::optional<std::string> image_ref;
  std::map<Label, std::string> candidates;
};

/// One task per source with a complete candidate set; incomplete ones are
/// skipped with a warning. The display order depends only on
/// (shuffle_seed, figure_id).
std::vector<AnnotationTask> create_tasks(const std::vector<TaskSource>& sources, Mode mode,
                                         std::uint64_t shuffle_seed, const Track& track);

/// Reads pipeline results JSONL. `image_refs` maps figure ids to images.
std::vector<AnnotationTask> create_tasks(const std::filesystem::path& results_path, Mode mode,
                                         std::uint64_t shuffle_seed, const Track& track,
                                         const std::map<std::string, std::string>& image_refs = {});

struct AnnotationResponse {
  std::string task_id;
  std::string judge_id;
  std::optional<std::string> best;   // display key, BEST_WORST
  std::optional<std::string> worst;  // display key, BEST_WORST
  std::vector<std::string> ranking;  // display keys best first, RANK
  std::string received_at;

  /// Equality of everything the judge submitted (received_at excluded).
  bool same_payload(const AnnotationResponse& other) const;
};

/// Throws Error(Validation) on missing or mistyped fields.
AnnotationResponse response_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnnotationResponse& r);

struct Ack {
  std::string task_id;
  bool duplicate = false;
};

struct Progress {
  std::size_t answered = 0;
  std::size_t total = 0;
};

struct ExportRow {
  std::string figure_id;
  std::string judge_id;
  std::optional<Label> best;
  std::optional<Label> worst;
  std::optional<std::array<int, 4>> rank_by_label;  // 1 = best, indexed by Label
};

struct AnnotationExport {
  std::vector<ExportRow> rows;
};

nlohmann::json to_json(const AnnotationExport& e);
/// Accepts {"rows": [...]} or a server export body {"annotations": {"rows": [...]}}.
AnnotationExport export_from_json(const nlohmann::json& j);

struct AgreementReport {
  std::optional<double> fleiss_kappa;        // over best selections
  std::optional<double> fleiss_kappa_worst;  // over worst selections
  std::optional<double> kendall_tau;         // mean pairwise tau over rankings
  std::size_t n_items = 0;
  std::size_t n_raters = 0;
};

nlohmann::json to_json(const AgreementReport& r);

/// Agreement over the figures every judge answered: Fleiss' kappa with
/// categories A-D for best/worst picks, and Kendall's tau between rank
/// vectors averaged over judge pairs and figures. Throws Error(Degenerate)
/// with fewer than two judges or no common figure.
AgreementReport agreement(const AnnotationExport& e, Mode mode);

/// Task queue and append-only response log. Reads take a shared lock; writes
/// go through a single writer.
class AnnotationStore {
 public:
  /// Replays any responses already in `response_log`.
  AnnotationStore(std::vector<AnnotationTask> tasks, std::filesystem::path response_log);
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Lowest-indexed task the judge has not answered.
  std::optional<AnnotationTask> next_task(const std::string& judge_id) const;
  Progress progress(const std::string& judge_id) const;

  /// Validates and durably appends before returning. Exact resubmissions are
  /// acknowledged without a second row. Throws VALIDATION, NOT_FOUND or
  /// CONFLICT.
  Ack submit(AnnotationResponse response);

  AnnotationExport export_annotations() const;
  AgreementReport export_agreement() const;

  const std::vector<AnnotationTask>& tasks() const noexcept { return tasks_; }
  const AnnotationTask* find_task(std::string_view task_id) const;
  std::size_t stored_responses() const;

 private:
  void validate(const AnnotationResponse& r, const AnnotationTask& task) const;
  void append_line(const std::string& line);

  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t, std::less<>> task_index_;
  std::filesystem::path log_path_;
  std::FILE* log_ = nullptr;
  mutable std::shared_mutex mu_;
  std::vector<AnnotationResponse> responses_;
  std::map<std::pair<std::string, std::string>, std::size_t> by_task_judge_;
};

struct ServerOptions {
  /// Bearer token for GET /api/export; export is refused when empty.
  std::string operator_token;
  std::filesystem::path image_root;
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP front end:
///   GET  /api/tasks/next?judge=ID
///   POST /api/responses
///   GET  /api/progress?judge=ID
///   GET  /api/export                 (operator bearer token)
///   GET  /api/figures/{id}/image
/// Errors are {code, message} with a matching HTTP status.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, ServerOptions options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mlbcap::evalserve
