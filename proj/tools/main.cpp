#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mlbcap/config.hpp"
#include "mlbcap/corpus.hpp"
#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/evalserve.hpp"
#include "mlbcap/metrics.hpp"
#include "mlbcap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mlbcap;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kFatal = 2;

constexpr const char* kOperatorTokenEnv = "MLBCAP_OPERATOR_TOKEN";

struct Options {
  fs::path config;
  fs::path corpus;
  fs::path out;
  fs::path export_file;
  fs::path ui_dir;
  std::string track;
  std::string mode = "best_worst";
  std::string judge_image;
  std::optional<std::uint64_t> seed;
  std::optional<int> threshold;
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// Failure that carries the stage it happened in, for the error line.
struct StageError {
  std::string stage;
  Error error;
};

PipelineConfig load_with_overrides(const Options& o) {
  auto config = load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  if (o.threshold) {
    if (*o.threshold < 1 || *o.threshold > 6) throw Error(ErrorCode::Config, "--threshold must be in 1..6");
    config.quality_threshold = *o.threshold;
  }
  if (o.judge_image == "on") config.judge_image = true;
  if (o.judge_image == "off") config.judge_image = false;
  return config;
}

Track resolve_track(const Options& o, const PipelineConfig& config) {
  return Track::parse(o.track.empty() ? config.track : o.track, config.max_len_long, config.max_len_short);
}

int report_failures(const std::vector<StageReport>& stages) {
  std::size_t count = 0;
  for (const auto& s : stages) {
    for (const auto& f : s.failures) {
      std::cerr << "failure: stage=" << f.stage << " figure_id=" << f.figure_id << " " << to_string(f.code)
                << ": " << f.message << "\n";
      ++count;
    }
  }
  return count == 0 ? kOk : kPartial;
}

int finish(PipelineRunner& runner, const fs::path& out, std::vector<StageReport> stages, const Track& track) {
  write_manifest(out, runner.manifest(stages, track));
  return report_failures(stages);
}

int cmd_ingest(const Options& o) {
  auto report = ingest_corpus(o.corpus, o.out);
  std::cout << report.summary.dump(2) << "\n";
  return kOk;
}

int cmd_assess(const Options& o) {
  auto config = load_with_overrides(o);
  PipelineRunner runner(config, o.out, o.corpus.parent_path());
  auto report = runner.assess();
  std::cout << report.summary.dump(2) << "\n";
  return finish(runner, o.out, {report}, resolve_track(o, config));
}

int cmd_generate(const Options& o) {
  auto config = load_with_overrides(o);
  PipelineRunner runner(config, o.out, o.corpus.parent_path());
  auto report = runner.generate(o.corpus);
  std::cout << report.summary.dump(2) << "\n";
  return finish(runner, o.out, {report}, resolve_track(o, config));
}

int cmd_judge(const Options& o) {
  auto config = load_with_overrides(o);
  const auto track = resolve_track(o, config);
  PipelineRunner runner(config, o.out, o.corpus.parent_path());
  auto report = runner.judge(o.corpus, track);
  std::cout << report.summary.dump(2) << "\n";
  return finish(runner, o.out, {report}, track);
}

int cmd_run(const Options& o) {
  auto config = load_with_overrides(o);
  const auto track = resolve_track(o, config);
  auto manifest = run_pipeline(o.corpus, config, track, o.out);
  std::cout << "run " << manifest.run_id << ": " << manifest.figures.size() << " figures, "
            << (o.out / files::kResults).string() << "\n";
  return report_failures(manifest.stages);
}

int cmd_evaluate(const Options& o) {
  const auto results = fs::is_directory(o.out) ? o.out / files::kResults : o.out;
  auto evaluation = metrics::evaluate_run(results, o.corpus);
  const auto dir = results.parent_path();
  write_file_atomic(dir / "report.json", metrics::to_json(evaluation.report).dump(2) + "\n");
  write_file_atomic(dir / "pairs.csv", metrics::pairs_csv(evaluation));
  std::cout << metrics::to_json(evaluation.report).dump(2) << "\n";
  return kOk;
}

int cmd_agree(const Options& o) {
  auto parsed = nlohmann::json::parse(read_file(o.export_file), nullptr, false);
  if (parsed.is_discarded()) throw Error(ErrorCode::Io, o.export_file.string() + " is not valid JSON");
  auto report = evalserve::agreement(evalserve::export_from_json(parsed), evalserve::parse_mode(o.mode));
  std::cout << evalserve::to_json(report).dump(2) << "\n";
  return kOk;
}

std::atomic<evalserve::AnnotationServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_serve(const Options& o) {
  std::map<std::string, std::string> image_refs;
  if (!o.corpus.empty()) {
    for (const auto& r : load_corpus(o.corpus).records) {
      if (r.image_ref) image_refs.emplace(r.figure_id, *r.image_ref);
    }
  }
  const auto track = Track::parse(o.track.empty() ? "long" : o.track);
  auto tasks = evalserve::create_tasks(o.out / files::kResults, evalserve::parse_mode(o.mode),
                                       o.seed.value_or(0), track, image_refs);
  evalserve::AnnotationStore store(std::move(tasks), o.out / "annotations" / "responses.jsonl");

  evalserve::ServerOptions options;
  if (const char* token = std::getenv(kOperatorTokenEnv)) options.operator_token = token;
  if (options.operator_token.empty()) {
    spdlog::warn("{} is unset; /api/export is disabled", kOperatorTokenEnv);
  }
  options.image_root = o.corpus.empty() ? fs::path{} : o.corpus.parent_path();
  if (!o.ui_dir.empty()) options.static_dir = o.ui_dir;

  evalserve::AnnotationServer server(store, options);
  const int port = server.bind(o.host, o.port);
  std::cout << "serving " << store.tasks().size() << " tasks on http://" << o.host << ":" << port << "\n"
            << std::flush;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  return kOk;
}

int cmd_report(const Options& o) {
  std::ostringstream text;
  text << "Report for " << o.out.string() << "\n";
  if (const auto path = o.out / files::kHistogram; fs::exists(path)) {
    auto h = nlohmann::json::parse(read_file(path));
    text << "\nQuality scores (" << h.at("total").get<std::size_t>() << " rated)\n";
    for (int score = 1; score <= 6; ++score) {
      const auto key = std::to_string(score);
      char line[96];
      std::snprintf(line, sizeof line, "  %d: %6lld  %6.2f%%\n", score, h.at("counts").at(key).get<long long>(),
                    h.at("percentages").at(key).get<double>());
      text << line;
    }
  }

  if (const auto path = o.out / files::kResults; fs::exists(path)) {
    std::vector<JudgmentResult> judgments;
    std::size_t over_limit = 0;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto row = nlohmann::json::parse(line);
      const auto& j = row.at("judgment");
      JudgmentResult r;
      r.figure_id = row.at("figure_id").get<std::string>();
      r.good = *parse_label(j.at("good").get<std::string>());
      r.bad = *parse_label(j.at("bad").get<std::string>());
      r.improved_caption = j.at("improved_caption").get<std::string>();
      r.word_count_ok = j.at("word_count_ok").get<bool>();
      over_limit += r.word_count_ok ? 0 : 1;
      judgments.push_back(std::move(r));
    }
    text << "\nJudged figures: " << judgments.size() << " (" << over_limit << " over the word limit)\n";
    if (!judgments.empty()) {
      text << "Best caption source\n";
      for (const auto& [label, share] : best_source_share(judgments)) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "  %s %-12s %6.2f%%\n", std::string(to_string(label)).c_str(),
                      std::string(role_name(label)).c_str(), share);
        text << buf;
      }
    }
  }
  std::cout << text.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("mlbcap");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);

  Options o;
  CLI::App app{"Figure caption generation, judging and human evaluation"};
  app.require_subcommand(1, 1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  const std::map<std::string, std::string> track_names{{"long", "long"}, {"short", "short"}};
  const std::map<std::string, std::string> switch_names{{"on", "on"}, {"off", "off"}};

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Pipeline YAML config")->required()->check(CLI::ExistingFile);
  };
  auto add_corpus = [&](CLI::App* sub, const std::string& help) {
    return sub->add_option("--corpus", o.corpus, help)->check(CLI::ExistingFile);
  };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "Output directory")->required(); };
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--threshold", o.threshold, "Override the quality threshold (1-6)");
    sub->add_option("--judge-image", o.judge_image, "Send the figure image to the judge")
        ->transform(CLI::CheckedTransformer(switch_names, CLI::ignore_case));
  };
  auto add_track = [&](CLI::App* sub) {
    sub->add_option("--track", o.track, "Caption track: long or short")
        ->transform(CLI::CheckedTransformer(track_names, CLI::ignore_case));
  };

  std::map<CLI::App*, std::function<int(const Options&)>> handlers;

  auto* ingest = app.add_subcommand("ingest", "Load, deduplicate and filter a corpus");
  add_corpus(ingest, "Corpus JSONL")->required();
  add_out(ingest);
  handlers[ingest] = cmd_ingest;

  auto* assess = app.add_subcommand("assess", "Rate figure quality and write the score histogram");
  add_config(assess);
  add_corpus(assess, "Corpus JSONL; its directory is the image root")->required();
  add_out(assess);
  add_overrides(assess);
  handlers[assess] = cmd_assess;

  auto* generate = app.add_subcommand("generate", "Describe test figures and generate four candidates");
  add_config(generate);
  add_corpus(generate, "Corpus JSONL")->required();
  add_out(generate);
  add_overrides(generate);
  handlers[generate] = cmd_generate;

  auto* judge_cmd = app.add_subcommand("judge", "Pick best/worst candidates and post-edit");
  add_config(judge_cmd);
  add_corpus(judge_cmd, "Corpus JSONL")->required();
  add_out(judge_cmd);
  add_track(judge_cmd);
  add_overrides(judge_cmd);
  handlers[judge_cmd] = cmd_judge;

  auto* run = app.add_subcommand("run", "Run ingest, assess, generate and judge");
  add_config(run);
  add_corpus(run, "Corpus JSONL")->required();
  add_out(run);
  add_track(run);
  add_overrides(run);
  handlers[run] = cmd_run;

  auto* evaluate = app.add_subcommand("evaluate", "Score improved captions against references");
  evaluate->add_option("--out", o.out, "Run directory or results JSONL")->required();
  add_corpus(evaluate, "Reference JSONL with figure_id and caption")->required();
  handlers[evaluate] = cmd_evaluate;

  auto* agree = app.add_subcommand("agree", "Inter-rater agreement from an annotation export");
  agree->add_option("--export", o.export_file, "Export JSON")->required()->check(CLI::ExistingFile);
  agree->add_option("--mode", o.mode, "best_worst or rank");
  handlers[agree] = cmd_agree;

  auto* serve = app.add_subcommand("serve", "Serve human evaluation tasks over HTTP");
  serve->add_option("--out", o.out, "Run directory holding results.jsonl")->required()->check(CLI::ExistingDirectory);
  add_corpus(serve, "Corpus JSONL supplying figure images");
  serve->add_option("--mode", o.mode, "best_worst or rank");
  serve->add_option("--seed", o.seed, "Candidate shuffle seed");
  add_track(serve);
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port, 0 for any free port");
  serve->add_option("--ui", o.ui_dir, "Static UI directory")->check(CLI::ExistingDirectory);
  handlers[serve] = cmd_serve;

  auto* report = app.add_subcommand("report", "Print a summary of a run directory");
  report->add_option("--out", o.out, "Run directory")->required()->check(CLI::ExistingDirectory);
  handlers[report] = cmd_report;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kFatal;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  CLI::App* chosen = app.get_subcommands().front();
  try {
    return handlers.at(chosen)(o);
  } catch (const Error& e) {
    std::cerr << "error: stage=" << chosen->get_name() << " figure_id=- " << to_string(e.code()) << ": "
              << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: stage=" << chosen->get_name() << " figure_id=- IO_ERROR: " << e.what() << "\n";
  }
  return kFatal;
}
