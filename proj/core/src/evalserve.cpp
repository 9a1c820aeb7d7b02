#include "mlbcap/evalserve.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/metrics.hpp"
#include "mlbcap/random.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap::evalserve {
namespace {

const std::array<std::string, 4> kDisplayKeys{"1", "2", "3", "4"};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::string> optional_key(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::Validation, std::string(key) + " must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::BestWorst ? "best_worst" : "rank"; }

Mode parse_mode(std::string_view name) {
  const auto lower = to_lower_ascii(name);
  if (lower == "best_worst" || lower == "best-worst") return Mode::BestWorst;
  if (lower == "rank") return Mode::Rank;
  throw Error(ErrorCode::Config, "unknown annotation mode '" + std::string(name) + "'");
}

const DisplayItem* AnnotationTask::item(std::string_view display_key) const {
  for (const auto& d : shuffled) {
    if (d.display_key == display_key) return &d;
  }
  return nullptr;
}

nlohmann::json client_view(const AnnotationTask& task) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& d : task.shuffled) {
    candidates.push_back({{"display_key", d.display_key}, {"text", d.text}});
  }
  nlohmann::json j{{"task_id", task.task_id},
                   {"figure_id", task.figure_id},
                   {"mode", to_string(task.mode)},
                   {"track", {{"kind", to_string(task.track.kind)},
                              {"max_len_words", task.track.max_len_words}}},
                   {"candidates", candidates}};
  j["image_url"] = task.image_ref ? nlohmann::json("/api/figures/" + task.figure_id + "/image")
                                  : nlohmann::json(nullptr);
  return j;
}

std::vector<AnnotationTask> create_tasks(const std::vector<TaskSource>& sources, Mode mode,
                                         std::uint64_t shuffle_seed, const Track& track) {
  std::vector<AnnotationTask> tasks;
  std::set<std::string> seen;
  for (const auto& src : sources) {
    bool complete = true;
    for (Label label : kAllLabels) {
      auto it = src.candidates.find(label);
      complete = complete && it != src.candidates.end() && !it->second.empty();
    }
    if (!complete) {
      spdlog::warn("evalserve: skipping {}: candidate set incomplete", src.figure_id);
      continue;
    }
    if (!seen.insert(src.figure_id).second) {
      spdlog::warn("evalserve: skipping duplicate figure {}", src.figure_id);
      continue;
    }
    std::vector<Label> order(kAllLabels.begin(), kAllLabels.end());
    std::mt19937_64 rng(sha256_u64(std::to_string(shuffle_seed) + ":" + src.figure_id));
    portable_shuffle(order, rng);

    AnnotationTask task;
    char id[32];
    std::snprintf(id, sizeof id, "task-%04zu", tasks.size() + 1);
    task.task_id = id;
    task.figure_id = src.figure_id;
    task.image_ref = src.image_ref;
    task.mode = mode;
    task.track = track;
    for (std::size_t i = 0; i < order.size(); ++i) {
      task.shuffled.push_back({kDisplayKeys[i], order[i], src.candidates.at(order[i])});
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<AnnotationTask> create_tasks(const std::filesystem::path& results_path, Mode mode,
                                         std::uint64_t shuffle_seed, const Track& track,
                                         const std::map<std::string, std::string>& image_refs) {
  std::istringstream in(read_file(results_path));
  std::vector<TaskSource> sources;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TaskSource src;
      src.figure_id = j.at("figure_id").get<std::string>();
      for (const auto& [key, value] : j.at("candidates").items()) {
        auto label = parse_label(key);
        if (!label) continue;
        // results.jsonl stores texts; candidates.jsonl stores {text, backend_id}.
        src.candidates[*label] = value.is_string() ? value.get<std::string>()
                                                   : value.at("text").get<std::string>();
      }
      if (auto it = image_refs.find(src.figure_id); it != image_refs.end()) src.image_ref = it->second;
      sources.push_back(std::move(src));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io, results_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return create_tasks(sources, mode, shuffle_seed, track);
}

bool AnnotationResponse::same_payload(const AnnotationResponse& o) const {
  return task_id == o.task_id && judge_id == o.judge_id && best == o.best && worst == o.worst &&
         ranking == o.ranking;
}

AnnotationResponse response_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Validation, "response must be a JSON object");
  AnnotationResponse r;
  r.task_id = optional_key(j, "task_id").value_or("");
  r.judge_id = optional_key(j, "judge_id").value_or("");
  if (r.task_id.empty()) throw Error(ErrorCode::Validation, "task_id is required");
  if (r.judge_id.empty()) throw Error(ErrorCode::Validation, "judge_id is required");
  r.best = optional_key(j, "best");
  r.worst = optional_key(j, "worst");
  if (auto it = j.find("ranking"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::Validation, "ranking must be an array");
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(ErrorCode::Validation, "ranking entries must be strings");
      r.ranking.push_back(v.get<std::string>());
    }
  }
  r.received_at = optional_key(j, "received_at").value_or("");
  return r;
}

nlohmann::json to_json(const AnnotationResponse& r) {
  nlohmann::json j{{"task_id", r.task_id}, {"judge_id", r.judge_id}, {"received_at", r.received_at}};
  if (r.best) j["best"] = *r.best;
  if (r.worst) j["worst"] = *r.worst;
  if (!r.ranking.empty()) j["ranking"] = r.ranking;
  return j;
}

nlohmann::json to_json(const AnnotationExport& e) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : e.rows) {
    nlohmann::json row{{"figure_id", r.figure_id}, {"judge_id", r.judge_id}};
    if (r.best) row["best"] = to_string(*r.best);
    if (r.worst) row["worst"] = to_string(*r.worst);
    if (r.rank_by_label) {
      nlohmann::json ranks = nlohmann::json::object();
      for (Label label : kAllLabels) {
        ranks[std::string(to_string(label))] = (*r.rank_by_label)[static_cast<std::size_t>(label)];
      }
      row["rank"] = ranks;
    }
    rows.push_back(row);
  }
  return {{"rows", rows}};
}

AnnotationExport export_from_json(const nlohmann::json& j) {
  const nlohmann::json& body = j.contains("annotations") ? j.at("annotations") : j;
  AnnotationExport out;
  try {
    for (const auto& row : body.at("rows")) {
      ExportRow r{row.at("figure_id").get<std::string>(), row.at("judge_id").get<std::string>(),
                  std::nullopt, std::nullopt, std::nullopt};
      auto label = [](const nlohmann::json& v) {
        auto parsed = parse_label(v.get<std::string>());
        if (!parsed) throw Error(ErrorCode::Validation, "bad label " + v.dump());
        return *parsed;
      };
      if (row.contains("best")) r.best = label(row.at("best"));
      if (row.contains("worst")) r.worst = label(row.at("worst"));
      if (row.contains("rank")) {
        std::array<int, 4> ranks{};
        for (Label l : kAllLabels) ranks[static_cast<std::size_t>(l)] = row.at("rank").at(std::string(to_string(l)));
        r.rank_by_label = ranks;
      }
      out.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("malformed export: ") + e.what());
  }
  return out;
}

nlohmann::json to_json(const AgreementReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"fleiss_kappa", opt(r.fleiss_kappa)},
          {"fleiss_kappa_worst", opt(r.fleiss_kappa_worst)},
          {"kendall_tau", opt(r.kendall_tau)},
          {"n_items", r.n_items},
          {"n_raters", r.n_raters}};
}

AgreementReport agreement(const AnnotationExport& e, Mode mode) {
  std::map<std::string, std::map<std::string, const ExportRow*>> by_figure;  // figure -> judge -> row
  std::set<std::string> judges;
  for (const auto& row : e.rows) {
    by_figure[row.figure_id][row.judge_id] = &row;
    judges.insert(row.judge_id);
  }
  if (judges.size() < 2) throw Error(ErrorCode::Degenerate, "agreement needs at least two judges");

  std::vector<const std::map<std::string, const ExportRow*>*> common;
  for (const auto& [figure, rows] : by_figure) {
    if (rows.size() == judges.size()) common.push_back(&rows);
  }
  if (common.empty()) throw Error(ErrorCode::Degenerate, "judges share no completed figure");

  AgreementReport report;
  report.n_items = common.size();
  report.n_raters = judges.size();

  if (mode == Mode::BestWorst) {
    std::vector<std::vector<int>> best_table, worst_table;
    for (const auto* rows : common) {
      std::vector<int> best(4, 0), worst(4, 0);
      for (const auto& [judge, row] : *rows) {
        if (!row->best || !row->worst) throw Error(ErrorCode::Degenerate, "response lacks best/worst");
        ++best[static_cast<std::size_t>(*row->best)];
        ++worst[static_cast<std::size_t>(*row->worst)];
      }
      best_table.push_back(best);
      worst_table.push_back(worst);
    }
    report.fleiss_kappa = metrics::fleiss_kappa(best_table);
    report.fleiss_kappa_worst = metrics::fleiss_kappa(worst_table);
  } else {
    const std::vector<std::string> ids(judges.begin(), judges.end());
    double sum = 0;
    std::size_t count = 0;
    for (const auto* rows : common) {
      for (std::size_t a = 0; a < ids.size(); ++a) {
        for (std::size_t b = a + 1; b < ids.size(); ++b) {
          const auto& ra = rows->at(ids[a])->rank_by_label;
          const auto& rb = rows->at(ids[b])->rank_by_label;
          if (!ra || !rb) throw Error(ErrorCode::Degenerate, "response lacks a ranking");
          sum += metrics::kendall_tau(std::vector<double>(ra->begin(), ra->end()),
                                      std::vector<double>(rb->begin(), rb->end()));
          ++count;
        }
      }
    }
    report.kendall_tau = sum / static_cast<double>(count);
  }
  return report;
}

// ---------------------------------------------------------------------------

AnnotationStore::AnnotationStore(std::vector<AnnotationTask> tasks, std::filesystem::path response_log)
    : tasks_(std::move(tasks)), log_path_(std::move(response_log)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) task_index_.emplace(tasks_[i].task_id, i);

  if (std::filesystem::exists(log_path_)) {
    std::istringstream in(read_file(log_path_));
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      try {
        auto r = response_from_json(nlohmann::json::parse(line));
        if (!find_task(r.task_id)) continue;
        if (by_task_judge_.emplace(std::pair{r.task_id, r.judge_id}, responses_.size()).second) {
          responses_.push_back(std::move(r));
        }
      } catch (const std::exception& e) {
        // A torn final line from a crash is the only expected cause.
        spdlog::warn("evalserve: ignoring unreadable log line in {}: {}", log_path_.string(), e.what());
      }
    }
  }
  if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
  log_ = std::fopen(log_path_.c_str(), "ab");
  if (!log_) throw Error(ErrorCode::Io, "cannot open response log " + log_path_.string());
}

AnnotationStore::~AnnotationStore() {
  if (log_) std::fclose(log_);
}

const AnnotationTask* AnnotationStore::find_task(std::string_view task_id) const {
  auto it = task_index_.find(task_id);
  return it == task_index_.end() ? nullptr : &tasks_[it->second];
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& judge_id) const {
  std::shared_lock lock(mu_);
  for (const auto& task : tasks_) {
    if (!by_task_judge_.count({task.task_id, judge_id})) return task;
  }
  return std::nullopt;
}

Progress AnnotationStore::progress(const std::string& judge_id) const {
  std::shared_lock lock(mu_);
  Progress p{0, tasks_.size()};
  for (const auto& task : tasks_) p.answered += by_task_judge_.count({task.task_id, judge_id});
  return p;
}

std::size_t AnnotationStore::stored_responses() const {
  std::shared_lock lock(mu_);
  return responses_.size();
}

void AnnotationStore::validate(const AnnotationResponse& r, const AnnotationTask& task) const {
  if (r.judge_id.empty()) throw Error(ErrorCode::Validation, "judge_id is required");
  if (task.mode == Mode::BestWorst) {
    if (!r.best || !r.worst) throw Error(ErrorCode::Validation, "best and worst are required");
    if (!task.item(*r.best) || !task.item(*r.worst)) {
      throw Error(ErrorCode::Validation, "best/worst must be display keys 1-4");
    }
    if (*r.best == *r.worst) throw Error(ErrorCode::Validation, "best and worst must differ");
    if (!r.ranking.empty()) throw Error(ErrorCode::Validation, "ranking is not accepted in best_worst mode");
  } else {
    if (r.best || r.worst) throw Error(ErrorCode::Validation, "best/worst are not accepted in rank mode");
    std::vector<std::string> sorted = r.ranking;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::string> expected;
    for (const auto& d : task.shuffled) expected.push_back(d.display_key);
    std::sort(expected.begin(), expected.end());
    if (sorted != expected) throw Error(ErrorCode::Validation, "ranking must be a permutation of 1-4");
  }
}

void AnnotationStore::append_line(const std::string& line) {
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
      ::fsync(::fileno(log_)) != 0) {
    throw Error(ErrorCode::Io, "cannot append to " + log_path_.string());
  }
}

Ack AnnotationStore::submit(AnnotationResponse response) {
  const auto* task = find_task(response.task_id);
  if (!task) throw Error(ErrorCode::NotFound, "unknown task " + response.task_id);
  validate(response, *task);

  std::unique_lock lock(mu_);
  const auto key = std::pair{response.task_id, response.judge_id};
  if (auto it = by_task_judge_.find(key); it != by_task_judge_.end()) {
    if (responses_[it->second].same_payload(response)) return {response.task_id, true};
    throw Error(ErrorCode::Conflict, "judge already answered " + response.task_id + " differently");
  }
  if (response.received_at.empty()) response.received_at = utc_now();
  append_line(to_json(response).dump() + "\n");
  by_task_judge_.emplace(key, responses_.size());
  responses_.push_back(std::move(response));
  return {key.first, false};
}

AnnotationExport AnnotationStore::export_annotations() const {
  std::shared_lock lock(mu_);
  AnnotationExport out;
  for (const auto& r : responses_) {
    const auto* task = find_task(r.task_id);
    ExportRow row{task->figure_id, r.judge_id, std::nullopt, std::nullopt, std::nullopt};
    if (r.best) row.best = task->item(*r.best)->hidden_label;
    if (r.worst) row.worst = task->item(*r.worst)->hidden_label;
    if (!r.ranking.empty()) {
      std::array<int, 4> ranks{};
      for (std::size_t pos = 0; pos < r.ranking.size(); ++pos) {
        ranks[static_cast<std::size_t>(task->item(r.ranking[pos])->hidden_label)] = static_cast<int>(pos + 1);
      }
      row.rank_by_label = ranks;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

AgreementReport AnnotationStore::export_agreement() const {
  const Mode mode = tasks_.empty() ? Mode::BestWorst : tasks_.front().mode;
  return agreement(export_annotations(), mode);
}

}  // namespace mlbcap::evalserve
