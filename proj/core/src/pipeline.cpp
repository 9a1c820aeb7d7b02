#include "mlbcap/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mlbcap/digest.hpp"
#include "mlbcap/metrics.hpp"
#include "mlbcap/text.hpp"
#include "parallel.hpp"

namespace mlbcap {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

StageFailure failure_from(const std::string& figure_id, std::string_view stage, const Error& e) {
  return {figure_id, std::string(stage), e.code(), e.what()};
}

std::string jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& row : rows) out.append(row.dump()).push_back('\n');
  return out;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_failures(const std::filesystem::path& out_dir, std::string_view stage,
                    const std::vector<StageFailure>& failures) {
  std::vector<nlohmann::json> rows;
  for (const auto& f : failures) rows.push_back(to_json(f));
  write_file_atomic(out_dir / files::kFailuresDir / (std::string(stage) + ".jsonl"), jsonl(rows));
}

std::vector<StageFailure> read_failures(const std::filesystem::path& out_dir, std::string_view stage) {
  const auto path = out_dir / files::kFailuresDir / (std::string(stage) + ".jsonl");
  std::vector<StageFailure> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& row : read_jsonl(path)) {
    // Codes are stored by name; only the name round-trips into the manifest.
    out.push_back({row.at("figure_id"), row.at("stage"), ErrorCode::Io, row.at("message")});
    for (int c = 0; c <= static_cast<int>(ErrorCode::Unauthorized); ++c) {
      if (to_string(static_cast<ErrorCode>(c)) == row.at("code").get<std::string>()) {
        out.back().code = static_cast<ErrorCode>(c);
      }
    }
  }
  return out;
}

std::string extract_caption(std::string_view reply) {
  auto ex = extract_json_object(reply);
  auto it = ex.value.find("caption");
  if (it == ex.value.end() || !it->is_string()) {
    throw Error(ErrorCode::ParseInvalid, "reply lacks a string \"caption\" key");
  }
  std::string caption(trim(it->get<std::string>()));
  if (caption.empty()) throw Error(ErrorCode::ParseInvalid, "reply has an empty caption");
  return caption;
}

std::uint64_t figure_seed(std::uint64_t seed, const std::string& figure_id) {
  return sha256_u64(std::to_string(seed) + ":" + figure_id);
}

}  // namespace

nlohmann::json to_json(const StageFailure& f) {
  return {{"figure_id", f.figure_id},
          {"stage", f.stage},
          {"code", to_string(f.code)},
          {"message", f.message}};
}

// ---------------------------------------------------------------------------

int parse_rating(std::string_view reply, bool* clamped) {
  auto ex = extract_json_object(reply);
  auto it = ex.value.find("rating");
  if (it == ex.value.end()) throw Error(ErrorCode::ParseInvalid, "reply lacks a \"rating\" key");
  double raw = 0;
  if (it->is_number()) {
    raw = it->get<double>();
  } else if (it->is_string()) {
    try {
      raw = std::stod(it->get<std::string>());
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseInvalid, "rating is not numeric");
    }
  } else {
    throw Error(ErrorCode::ParseInvalid, "rating is not numeric");
  }
  if (!std::isfinite(raw)) throw Error(ErrorCode::ParseInvalid, "rating is not finite");
  const long rounded = std::lround(raw);
  const int value = static_cast<int>(std::clamp<long>(rounded, 1, 6));
  if (clamped) *clamped = value != rounded;
  return value;
}

AssessOutcome assess_quality(const std::vector<FigureRecord>& records, Backend& rater,
                             const StageOptions& options) {
  if (!rater.config().supports_images) {
    throw Error(ErrorCode::CapabilityError,
                rater.config().backend_id + " cannot rate captions: quality prompts carry the figure");
  }
  std::vector<std::optional<int>> ratings(records.size());
  std::vector<std::optional<StageFailure>> failures(records.size());
  std::vector<char> clamped(records.size(), 0);

  detail::parallel_for(records.size(), options.workers, [&](std::size_t i) {
    const auto& record = records[i];
    try {
      auto prompt = render_quality_assessment(record, options.token_limit);
      auto reply = cached_complete(options.cache, rater, "assess", prompt, options.image_root);
      bool was_clamped = false;
      ratings[i] = parse_rating(reply.text, &was_clamped);
      if (was_clamped) {
        clamped[i] = 1;
        spdlog::warn("assess: {}: out-of-range rating clamped to {}", record.figure_id, *ratings[i]);
      }
    } catch (const Error& e) {
      failures[i] = failure_from(record.figure_id, "assess", e);
    }
  });

  AssessOutcome out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (ratings[i]) {
      out.scored.push_back({records[i], QualityScore(*ratings[i], rater.config().backend_id)});
    } else {
      out.failures.push_back(*failures[i]);
    }
    out.clamped += clamped[i];
  }
  return out;
}

std::vector<ScoredRecord> build_dhigh(const std::vector<ScoredRecord>& scored) {
  return filter_quality(scored, kHighQualityThreshold);
}

FigureDescription describe_figure(const FigureRecord& record, Backend& describer,
                                  DescribeStyle style, const StageOptions& options) {
  if (!record.image_ref) {
    throw Error(ErrorCode::ImageRequired, "figure " + record.figure_id + " has no image to describe");
  }
  auto prompt = style == DescribeStyle::Large
                    ? render_description_large(record.figure_type, record.subject)
                    : render_description_simple();
  prompt.image_ref = record.image_ref;
  prompt.placeholder_fill["[Figure]"] = *record.image_ref;

  auto reply = cached_complete(options.cache, describer, "describe", prompt, options.image_root);
  std::string text;
  if (style == DescribeStyle::Large) {
    auto ex = extract_json_object(reply.text);
    auto it = ex.value.find("description");
    if (it == ex.value.end() || !it->is_string()) {
      throw Error(ErrorCode::ParseInvalid, "reply lacks a string \"description\" key");
    }
    text = std::string(trim(it->get<std::string>()));
  } else {
    text = std::string(trim(reply.text));
  }
  if (text.empty()) throw Error(ErrorCode::ParseInvalid, "empty figure description");
  return {std::move(text), describer.config().backend_id};
}

Backend& RoleBackends::at(Label label) const {
  auto* b = by_label[static_cast<std::size_t>(label)];
  if (!b) {
    throw Error(ErrorCode::Config, "no backend configured for caption " + std::string(to_string(label)));
  }
  return *b;
}

CandidateSet generate_candidates(const FigureRecord& record, std::string_view description,
                                 const FewShotSet& fewshot, const RoleBackends& roles,
                                 const StageOptions& options) {
  for (Label label : kAllLabels) roles.at(label);

  auto run_role = [&](Label label) -> CandidateCaption {
    Backend& backend = roles.at(label);
    const std::string stage = "generate_" + std::string(to_string(label));
    RenderedPrompt prompt;
    switch (label) {
      case Label::A: prompt = render_summary_prompt(record, options.token_limit); break;
      case Label::B:
      case Label::C:
        prompt = render_caption_prompt(record, description, std::nullopt, options.token_limit);
        break;
      case Label::D:
        prompt = render_caption_prompt(record, description, fewshot, options.token_limit);
        break;
    }
    auto reply = cached_complete(options.cache, backend, stage, prompt, options.image_root);
    std::string text = label == Label::A ? std::string(trim(reply.text)) : extract_caption(reply.text);
    if (text.empty()) throw Error(ErrorCode::ParseInvalid, "empty caption");
    return {label, std::move(text), backend.config().backend_id};
  };

  std::array<std::future<CandidateCaption>, 4> pending;
  for (Label label : kAllLabels) {
    pending[static_cast<std::size_t>(label)] = std::async(std::launch::async, run_role, label);
  }

  CandidateSet set{record.figure_id, {}};
  std::optional<Error> first_error;
  for (Label label : kAllLabels) {
    try {
      set.candidates.push_back(pending[static_cast<std::size_t>(label)].get());
    } catch (const Error& e) {
      if (!first_error) {
        first_error = Error(ErrorCode::CandidatesIncomplete,
                            record.figure_id + ": caption " + std::string(to_string(label)) + " (" +
                                std::string(role_name(label)) + ") failed: " +
                                std::string(to_string(e.code())) + ": " + e.what());
      }
    }
  }
  if (first_error) throw *first_error;
  return set;
}

ParsedJudgment parse_judgment(std::string_view reply) {
  nlohmann::json obj;
  try {
    obj = extract_json_object(reply).value;
  } catch (const Error& e) {
    throw Error(ErrorCode::JudgeParse, std::string("judgement reply: ") + e.what());
  }
  auto string_field = [&](const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
      throw Error(ErrorCode::JudgeParse, std::string("judgement reply lacks string key '") + key + "'");
    }
    return std::string(trim(it->get<std::string>()));
  };
  const auto good_text = string_field("Good");
  const auto bad_text = string_field("Bad");
  auto improved = string_field("Improved Caption");

  const auto good = parse_label(good_text);
  const auto bad = parse_label(bad_text);
  if (!good || !bad) {
    throw Error(ErrorCode::JudgeLabel,
                "judgement labels must be A-D, got Good='" + good_text + "' Bad='" + bad_text + "'");
  }
  if (*good == *bad) {
    throw Error(ErrorCode::JudgeConflict, "judgement names " + good_text + " as both best and worst");
  }
  if (improved.empty()) throw Error(ErrorCode::JudgeParse, "judgement has an empty Improved Caption");
  return {*good, *bad, std::move(improved)};
}

std::string word_limit_reminder(std::size_t words, int max_len) {
  return "\n\nYour Improved Caption has " + std::to_string(words) +
         " words. The Improved Caption MUST have a word count of " + std::to_string(max_len) +
         " words or less. Answer again in JSON format with the following keys: Good, Bad, "
         "Improved Caption";
}

JudgmentResult judge(const CandidateSet& candidates, std::string_view description,
                     const FigureRecord& record, Backend& judge_backend, const Track& track,
                     const StageOptions& options) {
  auto prompt = render_judgement(candidates, description, record.paragraphs, record.mentions, track,
                                 options.token_limit);
  if (options.judge_image && record.image_ref) {
    prompt.image_ref = record.image_ref;
    prompt.placeholder_fill["[Figure]"] = *record.image_ref;
  }

  auto reply = cached_complete(options.cache, judge_backend, "judge", prompt, options.image_root);
  auto parsed = parse_judgment(reply.text);

  JudgmentResult result{candidates.figure_id, parsed.good, parsed.bad, parsed.improved_caption,
                        track, false, false, reply.text};
  const auto limit = static_cast<std::size_t>(track.max_len_words);
  std::size_t words = word_count(result.improved_caption);
  if (words > limit) {
    auto reask = prompt;
    reask.text += word_limit_reminder(words, track.max_len_words);
    result.reasked = true;
    auto second = cached_complete(options.cache, judge_backend, "judge_reask", reask, options.image_root);
    try {
      auto again = parse_judgment(second.text);
      result.good = again.good;
      result.bad = again.bad;
      result.improved_caption = std::move(again.improved_caption);
      result.raw_reply = second.text;
      words = word_count(result.improved_caption);
    } catch (const Error& e) {
      spdlog::warn("judge: {}: re-ask reply unusable ({}), keeping first answer",
                   candidates.figure_id, e.what());
    }
  }
  result.word_count_ok = words <= limit;
  if (!result.word_count_ok) {
    spdlog::warn("judge: {}: improved caption has {} words (limit {})", candidates.figure_id, words,
                 limit);
  }
  return result;
}

std::map<Label, double> best_source_share(const std::vector<JudgmentResult>& judgments) {
  if (judgments.empty()) throw Error(ErrorCode::EmptyInput, "no judgements to summarize");
  std::map<Label, std::size_t> counts;
  for (Label label : kAllLabels) counts[label] = 0;
  for (const auto& j : judgments) ++counts[j.good];
  std::map<Label, double> share;
  for (auto [label, n] : counts) {
    share[label] = 100.0 * static_cast<double>(n) / static_cast<double>(judgments.size());
  }
  return share;
}

// ---------------------------------------------------------------------------

bool RunManifest::has_failures() const {
  for (const auto& s : stages) {
    if (!s.failures.empty()) return true;
  }
  return false;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["config_digest"] = config_digest;
  j["track"] = track;
  j["elapsed_ms"] = elapsed_ms;
  nlohmann::json cache_json = nlohmann::json::object();
  std::uint64_t hits = 0, misses = 0;
  for (const auto& [stage, c] : cache) {
    cache_json[stage] = {{"hits", c.hits}, {"misses", c.misses}};
    hits += c.hits;
    misses += c.misses;
  }
  j["cache"] = {{"stages", cache_json},
                {"hits", hits},
                {"misses", misses},
                {"hit_rate", hits + misses ? static_cast<double>(hits) / (hits + misses) : 1.0}};
  nlohmann::json stage_list = nlohmann::json::array();
  for (const auto& s : stages) {
    nlohmann::json fs = nlohmann::json::array();
    for (const auto& f : s.failures) fs.push_back(mlbcap::to_json(f));
    stage_list.push_back({{"stage", s.stage},
                          {"elapsed_ms", s.elapsed_ms},
                          {"summary", s.summary},
                          {"failures", fs}});
  }
  j["stages"] = stage_list;
  nlohmann::json figs = nlohmann::json::array();
  for (const auto& f : figures) {
    nlohmann::json row{{"figure_id", f.figure_id}, {"status", f.done ? "DONE" : "FAILED"}};
    if (!f.done) {
      row["stage"] = f.failed_stage;
      row["error"] = to_string(f.error);
      row["message"] = f.message;
    }
    figs.push_back(row);
  }
  j["figures"] = figs;
  return j;
}

void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest) {
  write_file_atomic(out_dir / files::kManifest, manifest.to_json().dump(2) + "\n");
}

StageReport ingest_corpus(const std::filesystem::path& corpus_path,
                          const std::filesystem::path& out_dir) {
  const auto start = Clock::now();
  auto loaded = load_corpus(corpus_path);
  auto deduped = dedup_by_paper(loaded.records);
  auto filtered = filter_preprocess(deduped);

  std::vector<nlohmann::json> kept, rejected;
  for (const auto& r : filtered.kept) kept.push_back(record_to_json(r));
  for (const auto& r : filtered.rejected) {
    rejected.push_back({{"figure_id", r.record.figure_id}, {"reason", to_string(r.reason)}});
  }
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / files::kKept, jsonl(kept));
  write_file_atomic(out_dir / files::kRejected, jsonl(rejected));

  StageReport report;
  report.stage = "ingest";
  for (const auto& r : deduped) report.figure_ids.push_back(r.figure_id);
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : loaded.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  report.summary = {{"loaded", loaded.records.size()},
                    {"malformed_lines", errors},
                    {"deduplicated", deduped.size()},
                    {"kept", filtered.kept.size()},
                    {"rejected", filtered.rejected.size()}};
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

PipelineRunner::PipelineRunner(PipelineConfig config, std::filesystem::path out_dir,
                               std::filesystem::path image_root)
    : config_(std::move(config)), out_dir_(std::move(out_dir)), image_root_(std::move(image_root)) {
  std::filesystem::create_directories(out_dir_);
  const auto cache_dir = config_.cache_dir.is_relative() ? out_dir_ / config_.cache_dir : config_.cache_dir;
  cache_ = std::make_unique<ResponseCache>(cache_dir);

  for (const auto* cfg : {&config_.rater, &config_.describer, &config_.judge, &config_.roles[0],
                          &config_.roles[1], &config_.roles[2], &config_.roles[3]}) {
    auto it = backends_.find(cfg->backend_id);
    if (it == backends_.end()) {
      HttpOptions http;
      http.image_root = image_root_;
      backends_.emplace(cfg->backend_id, make_backend(*cfg, http));
    } else if (it->second->config().fingerprint() != cfg->fingerprint() ||
               it->second->config().supports_images != cfg->supports_images) {
      throw Error(ErrorCode::Config,
                  "backend id '" + cfg->backend_id + "' is declared twice with different settings");
    }
  }
}

PipelineRunner::~PipelineRunner() = default;

Backend& PipelineRunner::backend_for(const BackendConfig& cfg) { return *backends_.at(cfg.backend_id); }

StageOptions PipelineRunner::options() const {
  StageOptions o;
  o.token_limit = config_.token_limit;
  o.cache = cache_.get();
  o.image_root = image_root_;
  o.judge_image = config_.judge_image;
  o.workers = config_.workers;
  return o;
}

std::vector<FigureRecord> PipelineRunner::test_figures(const std::filesystem::path& corpus_path) const {
  const auto& source = config_.test_corpus ? *config_.test_corpus : corpus_path;
  auto records = dedup_by_paper(load_corpus(source).records);
  std::set<std::string> seen;
  std::vector<FigureRecord> out;
  for (auto& r : records) {
    if (seen.insert(r.figure_id).second) {
      out.push_back(std::move(r));
    } else {
      spdlog::warn("test figure id {} appears under several papers; keeping the first", r.figure_id);
    }
  }
  return out;
}

StageReport PipelineRunner::assess() {
  const auto start = Clock::now();
  std::vector<FigureRecord> kept;
  for (const auto& row : read_jsonl(out_dir_ / files::kKept)) kept.push_back(record_from_json(row));

  auto outcome = assess_quality(kept, backend_for(config_.rater), options());

  std::vector<nlohmann::json> rows;
  std::vector<int> values;
  for (const auto& s : outcome.scored) {
    rows.push_back({{"figure_id", s.record.figure_id},
                    {"rating", s.score.value()},
                    {"rater", s.score.rater()}});
    values.push_back(s.score.value());
  }
  write_file_atomic(out_dir_ / files::kScores, jsonl(rows));
  const auto histogram = metrics::quality_distribution(values);
  write_file_atomic(out_dir_ / files::kHistogram, metrics::to_json(histogram).dump(2) + "\n");
  write_failures(out_dir_, "assess", outcome.failures);

  StageReport report;
  report.stage = "assess";
  for (const auto& r : kept) report.figure_ids.push_back(r.figure_id);
  report.failures = std::move(outcome.failures);
  report.summary = {{"rated", outcome.scored.size()},
                    {"clamped", outcome.clamped},
                    {"dhigh", filter_quality(outcome.scored, config_.quality_threshold).size()}};
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

StageReport PipelineRunner::generate(const std::filesystem::path& corpus_path) {
  const auto start = Clock::now();

  // Few-shot pool: rated kept records at or above the quality threshold.
  std::map<std::string, FigureRecord> kept_by_id;
  for (const auto& row : read_jsonl(out_dir_ / files::kKept)) {
    auto r = record_from_json(row);
    kept_by_id.emplace(r.figure_id, std::move(r));
  }
  std::vector<ScoredRecord> scored;
  for (const auto& row : read_jsonl(out_dir_ / files::kScores)) {
    auto it = kept_by_id.find(row.at("figure_id").get<std::string>());
    if (it == kept_by_id.end()) continue;
    scored.push_back({it->second, QualityScore(row.at("rating").get<int>(), row.at("rater"))});
  }
  const auto dhigh = filter_quality(scored, config_.quality_threshold);

  const auto figures = test_figures(corpus_path);
  const auto opts = options();
  RoleBackends roles;
  for (Label label : kAllLabels) {
    roles.by_label[static_cast<std::size_t>(label)] = &backend_for(config_.roles[static_cast<std::size_t>(label)]);
  }
  Backend& describer = backend_for(config_.describer);

  struct Outcome {
    std::optional<nlohmann::json> row;
    std::optional<StageFailure> failure;
  };
  std::vector<Outcome> outcomes(figures.size());

  detail::parallel_for(figures.size(), config_.workers, [&](std::size_t i) {
    const auto& record = figures[i];
    std::string stage = "describe";
    try {
      auto description = describe_figure(record, describer, config_.describe_style, opts);
      stage = "generate";
      std::vector<ScoredRecord> pool;
      for (const auto& s : dhigh) {
        if (s.record.figure_id != record.figure_id) pool.push_back(s);
      }
      auto fewshot = select_fewshot(pool, record.subject, config_.fewshot_k,
                                    figure_seed(config_.seed, record.figure_id));
      auto set = generate_candidates(record, description.text, fewshot, roles, opts);

      nlohmann::json candidates = nlohmann::json::object();
      for (const auto& c : set.candidates) {
        candidates[std::string(to_string(c.label))] = {{"text", c.text}, {"backend_id", c.backend_id}};
      }
      nlohmann::json shots = nlohmann::json::array();
      for (const auto& e : fewshot.examples) shots.push_back(e.figure_id);
      outcomes[i].row = nlohmann::json{{"figure_id", record.figure_id},
                                       {"description", description.text},
                                       {"description_backend", description.backend_id},
                                       {"fewshot", shots},
                                       {"candidates", candidates}};
    } catch (const Error& e) {
      outcomes[i].failure = failure_from(record.figure_id, stage, e);
    }
  });

  StageReport report;
  report.stage = "generate";
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < figures.size(); ++i) {
    report.figure_ids.push_back(figures[i].figure_id);
    if (outcomes[i].row) rows.push_back(*outcomes[i].row);
    if (outcomes[i].failure) report.failures.push_back(*outcomes[i].failure);
  }
  write_file_atomic(out_dir_ / files::kCandidates, jsonl(rows));
  write_failures(out_dir_, "generate", report.failures);
  report.summary = {{"figures", figures.size()}, {"generated", rows.size()}, {"dhigh", dhigh.size()}};
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

StageReport PipelineRunner::judge(const std::filesystem::path& corpus_path, const Track& track) {
  const auto start = Clock::now();
  std::map<std::string, FigureRecord> records;
  for (auto& r : test_figures(corpus_path)) records.emplace(r.figure_id, std::move(r));

  const auto rows = read_jsonl(out_dir_ / files::kCandidates);
  const auto opts = options();
  Backend& judge_backend = backend_for(config_.judge);

  struct Outcome {
    std::optional<nlohmann::json> row;
    std::optional<StageFailure> failure;
  };
  std::vector<Outcome> outcomes(rows.size());

  detail::parallel_for(rows.size(), config_.workers, [&](std::size_t i) {
    const auto& row = rows[i];
    const auto figure_id = row.at("figure_id").get<std::string>();
    try {
      auto it = records.find(figure_id);
      if (it == records.end()) {
        throw Error(ErrorCode::NotFound, "figure " + figure_id + " is not in the test corpus");
      }
      CandidateSet set{figure_id, {}};
      nlohmann::json texts = nlohmann::json::object();
      for (const auto& [key, value] : row.at("candidates").items()) {
        auto label = parse_label(key);
        if (!label) continue;
        set.candidates.push_back({*label, value.at("text"), value.at("backend_id")});
        texts[key] = value.at("text");
      }
      const auto description = row.at("description").get<std::string>();
      auto result = mlbcap::judge(set, description, it->second, judge_backend, track, opts);
      outcomes[i].row = nlohmann::json{
          {"figure_id", figure_id},
          {"description", description},
          {"candidates", texts},
          {"judgment",
           {{"good", to_string(result.good)},
            {"bad", to_string(result.bad)},
            {"improved_caption", result.improved_caption},
            {"word_count_ok", result.word_count_ok},
            {"reasked", result.reasked},
            {"track", to_string(track.kind)},
            {"max_len", track.max_len_words}}}};
    } catch (const Error& e) {
      outcomes[i].failure = failure_from(figure_id, "judge", e);
    }
  });

  StageReport report;
  report.stage = "judge";
  std::vector<nlohmann::json> out_rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    report.figure_ids.push_back(rows[i].at("figure_id"));
    if (outcomes[i].row) out_rows.push_back(*outcomes[i].row);
    if (outcomes[i].failure) report.failures.push_back(*outcomes[i].failure);
  }
  write_file_atomic(out_dir_ / files::kResults, jsonl(out_rows));
  write_failures(out_dir_, "judge", report.failures);
  report.summary = {{"judged", out_rows.size()}, {"track", to_string(track.kind)}};
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

RunManifest PipelineRunner::manifest(const std::vector<StageReport>& stages, const Track& track) const {
  RunManifest m;
  m.config_digest = config_.digest();
  m.track = std::string(to_string(track.kind));
  m.stages = stages;
  m.cache = cache_->stats();
  std::string id_material = m.config_digest + m.track;
  for (const auto& s : stages) {
    m.elapsed_ms += s.elapsed_ms;
    id_material += s.stage;
    for (const auto& f : s.figure_ids) id_material += "\x1f" + f;
  }
  m.run_id = sha256_hex(id_material).substr(0, 16);

  // Per-figure status over the test figures of the last figure-level stages.
  std::vector<std::string> figure_ids;
  std::map<std::string, const StageFailure*> failed;
  for (const auto& s : stages) {
    if (s.stage != "generate" && s.stage != "judge") continue;
    if (figure_ids.empty()) figure_ids = s.figure_ids;
    for (const auto& f : s.failures) failed.emplace(f.figure_id, &f);
  }
  // A standalone judge stage only knows the generated figures; earlier
  // generate failures are recovered from the failures directory.
  bool judge_only = !stages.empty() && stages.back().stage == "judge";
  for (const auto& s : stages) judge_only = judge_only && s.stage == "judge";
  std::vector<StageFailure> recovered;
  if (judge_only) {
    recovered = read_failures(out_dir_, "generate");
    for (const auto& f : recovered) {
      failed.emplace(f.figure_id, &f);
      if (std::find(figure_ids.begin(), figure_ids.end(), f.figure_id) == figure_ids.end()) {
        figure_ids.push_back(f.figure_id);
      }
    }
  }
  for (const auto& id : figure_ids) {
    FigureStatus st{id, true, {}, ErrorCode::Io, {}};
    if (auto it = failed.find(id); it != failed.end()) {
      st.done = false;
      st.failed_stage = it->second->stage;
      st.error = it->second->code;
      st.message = it->second->message;
    }
    m.figures.push_back(std::move(st));
  }
  return m;
}

RunManifest run_pipeline(const std::filesystem::path& corpus_path, const PipelineConfig& config,
                         const Track& track, const std::filesystem::path& out_dir) {
  std::vector<StageReport> stages;
  stages.push_back(ingest_corpus(corpus_path, out_dir));
  PipelineRunner runner(config, out_dir, corpus_path.parent_path());
  stages.push_back(runner.assess());
  stages.push_back(runner.generate(corpus_path));
  stages.push_back(runner.judge(corpus_path, track));
  auto manifest = runner.manifest(stages, track);
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace mlbcap
