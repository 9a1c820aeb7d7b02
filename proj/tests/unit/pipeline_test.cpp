#include <gtest/gtest.h>

#include "mlbcap/config.hpp"
#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/pipeline.hpp"
#include "mlbcap/text.hpp"
#include "support.hpp"

namespace mlbcap {
namespace {

using testing::ScriptedBackend;

std::string words(std::size_t n) {
  std::string out = "Fig. 1.";
  for (std::size_t i = 2; i < n; ++i) out += " w";
  return out;
}

std::string judgment_json(const std::string& good, const std::string& bad, const std::string& caption) {
  return nlohmann::json{{"Good", good}, {"Bad", bad}, {"Improved Caption", caption}}.dump();
}

FigureRecord record(const std::string& id = "fig1") {
  FigureRecord r;
  r.figure_id = id;
  r.paper_id = "p";
  r.subject = "cs.CV";
  r.figure_type = "Line Chart";
  r.caption = "Caption. Two.";
  r.paragraphs = {"Paragraph."};
  r.mentions = {"See Figure 1."};
  r.image_ref = "images/" + id + ".png";
  return r;
}

CandidateSet candidates() {
  return {"fig1",
          {{Label::A, "a", "x"}, {Label::B, "b", "x"}, {Label::C, "c", "x"}, {Label::D, "d", "x"}}};
}

ErrorCode judge_error(const std::string& reply) {
  try {
    parse_judgment(reply);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

TEST(ParseRating, AcceptsNumbersAndNumericStrings) {
  EXPECT_EQ(parse_rating(R"({"rating": 4})"), 4);
  EXPECT_EQ(parse_rating(R"(Answer: {"rating": "5"})"), 5);
  EXPECT_EQ(parse_rating(R"({"rating": 4.6})"), 5);
  bool clamped = false;
  EXPECT_EQ(parse_rating(R"({"rating": 9})", &clamped), 6);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(parse_rating(R"({"rating": 0})", &clamped), 1);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(parse_rating(R"({"rating": 3})", &clamped), 3);
  EXPECT_FALSE(clamped);
  EXPECT_THROW(parse_rating(R"({"score": 3})"), Error);
  EXPECT_THROW(parse_rating(R"({"rating": "high"})"), Error);
  EXPECT_THROW(parse_rating("six"), Error);
}

TEST(ParseJudgment, ErrorTaxonomy) {
  auto ok = parse_judgment("```json\n" + judgment_json("C", "A", "Fig. 2. Better.") + "\n```");
  EXPECT_EQ(ok.good, Label::C);
  EXPECT_EQ(ok.bad, Label::A);
  EXPECT_EQ(ok.improved_caption, "Fig. 2. Better.");

  EXPECT_EQ(judge_error("I cannot decide."), ErrorCode::JudgeParse);
  EXPECT_EQ(judge_error(R"({"Good": "A", "Bad": "B"})"), ErrorCode::JudgeParse);
  EXPECT_EQ(judge_error(R"({"Good": "A", "Bad": 2, "Improved Caption": "x"})"), ErrorCode::JudgeParse);
  EXPECT_EQ(judge_error(judgment_json("A", "B", "  ")), ErrorCode::JudgeParse);
  EXPECT_EQ(judge_error(judgment_json("E", "B", "x")), ErrorCode::JudgeLabel);
  EXPECT_EQ(judge_error(judgment_json("a", "B", "x")), ErrorCode::JudgeLabel);
  EXPECT_EQ(judge_error(judgment_json("Caption A", "B", "x")), ErrorCode::JudgeLabel);
  EXPECT_EQ(judge_error(judgment_json("B", "B", "x")), ErrorCode::JudgeConflict);
}

TEST(Judge, WithinLimitNeedsNoReask) {
  ScriptedBackend backend("judge", {judgment_json("D", "A", words(50))});
  auto r = judge(candidates(), "desc", record(), backend, Track::long_track());
  EXPECT_EQ(backend.calls(), 1u);
  EXPECT_FALSE(r.reasked);
  EXPECT_TRUE(r.word_count_ok);
  EXPECT_EQ(r.good, Label::D);
  EXPECT_FALSE(backend.prompts()[0].image_ref);
}

TEST(Judge, OverLimitReasksExactlyOnce) {
  ScriptedBackend backend("judge", {judgment_json("D", "A", words(40)), judgment_json("B", "C", words(25))});
  auto r = judge(candidates(), "desc", record(), backend, Track::short_track());
  EXPECT_EQ(backend.calls(), 2u);
  EXPECT_TRUE(r.reasked);
  EXPECT_TRUE(r.word_count_ok);
  EXPECT_EQ(r.good, Label::B);
  EXPECT_EQ(word_count(r.improved_caption), 25u);
  const auto prompts = backend.prompts();
  EXPECT_EQ(prompts[1].text, prompts[0].text + word_limit_reminder(40, 30));
}

TEST(Judge, StillOverLimitIsFlaggedNotTruncated) {
  ScriptedBackend backend("judge", {judgment_json("D", "A", words(40)), judgment_json("D", "A", words(35))});
  auto r = judge(candidates(), "desc", record(), backend, Track::short_track());
  EXPECT_EQ(backend.calls(), 2u);
  EXPECT_FALSE(r.word_count_ok);
  EXPECT_EQ(word_count(r.improved_caption), 35u);
}

TEST(Judge, MalformedReaskKeepsFirstAnswer) {
  ScriptedBackend backend("judge", {judgment_json("D", "A", words(40)), "nope"});
  auto r = judge(candidates(), "desc", record(), backend, Track::short_track());
  EXPECT_TRUE(r.reasked);
  EXPECT_FALSE(r.word_count_ok);
  EXPECT_EQ(word_count(r.improved_caption), 40u);
}

TEST(Judge, ImageOnlyWhenEnabled) {
  ScriptedBackend backend("judge", {judgment_json("D", "A", "Fig. 1. Short.")});
  StageOptions opts;
  opts.judge_image = true;
  judge(candidates(), "desc", record(), backend, Track::long_track(), opts);
  EXPECT_EQ(backend.prompts()[0].image_ref, record().image_ref);
}

TEST(Judge, MalformedFirstReplyPropagates) {
  ScriptedBackend backend("judge", {judgment_json("A", "A", "x")});
  try {
    judge(candidates(), "desc", record(), backend, Track::long_track());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JudgeConflict);
  }
}

TEST(Assess, PerRecordFailuresAndCapability) {
  ScriptedBackend rater("rater", {R"({"rating": 6})"});
  auto no_image = record("fig2");
  no_image.image_ref.reset();
  auto out = assess_quality({record("fig1"), no_image, record("fig3")}, rater);
  ASSERT_EQ(out.scored.size(), 2u);
  EXPECT_EQ(out.scored[1].record.figure_id, "fig3");
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].figure_id, "fig2");
  EXPECT_EQ(out.failures[0].code, ErrorCode::ImageRequired);

  ScriptedBackend text_only("t", {R"({"rating": 6})"}, false);
  EXPECT_THROW(assess_quality({record()}, text_only), Error);
}

TEST(Describe, LargeAndSimpleStyles) {
  ScriptedBackend large("d", {R"(Here: {"description": "  A line chart. "})"});
  EXPECT_EQ(describe_figure(record(), large, DescribeStyle::Large).text, "A line chart.");
  EXPECT_EQ(large.prompts()[0].template_id, TemplateId::DescriptionLarge);
  EXPECT_EQ(large.prompts()[0].image_ref, record().image_ref);

  ScriptedBackend simple("d", {"The image shows bars.\n"});
  EXPECT_EQ(describe_figure(record(), simple, DescribeStyle::Simple).text, "The image shows bars.");

  auto no_image = record();
  no_image.image_ref.reset();
  try {
    describe_figure(no_image, simple, DescribeStyle::Simple);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageRequired);
  }
}

TEST(Generate, RolesUseTheirPrompts) {
  ScriptedBackend a("sum", {"Fig. 1. Summary."}), b("ft1", {R"({"caption": "B cap."})"}),
      c("ft2", {R"({"caption": "C cap."})"}), d("api", {R"({"caption": "D cap."})"});
  RoleBackends roles{{&a, &b, &c, &d}};
  FewShotSet shots{{{"x", "Example caption. Two.", "cs.CV"}}, 1};
  auto set = generate_candidates(record(), "desc", shots, roles);
  ASSERT_TRUE(set.complete());
  EXPECT_EQ(set.find(Label::A)->text, "Fig. 1. Summary.");
  EXPECT_EQ(set.find(Label::D)->backend_id, "api");
  EXPECT_EQ(a.prompts()[0].template_id, TemplateId::Summary);
  EXPECT_EQ(b.prompts()[0].template_id, TemplateId::CaptionPlain);
  EXPECT_EQ(c.prompts()[0].template_id, TemplateId::CaptionPlain);
  EXPECT_EQ(d.prompts()[0].template_id, TemplateId::CaptionFewshot);
  EXPECT_NE(d.prompts()[0].text.find("- Example caption. Two."), std::string::npos);
}

TEST(Generate, OneFailedRoleFailsTheSet) {
  ScriptedBackend a("sum", {"ok"}), b("ft1", {R"({"caption": "B"})"}), c("ft2", {"not json"}),
      d("api", {R"({"caption": "D"})"});
  RoleBackends roles{{&a, &b, &c, &d}};
  try {
    generate_candidates(record(), "desc", {}, roles);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CandidatesIncomplete);
    EXPECT_NE(std::string(e.what()).find("caption C"), std::string::npos);
  }
}

TEST(BestSourceShare, CountsBestLabels) {
  std::vector<JudgmentResult> js(8);
  for (std::size_t i = 0; i < js.size(); ++i) js[i].good = i < 5 ? Label::D : (i < 7 ? Label::B : Label::A);
  auto share = best_source_share(js);
  EXPECT_DOUBLE_EQ(share[Label::A], 12.5);
  EXPECT_DOUBLE_EQ(share[Label::B], 25.0);
  EXPECT_DOUBLE_EQ(share[Label::C], 0.0);
  EXPECT_DOUBLE_EQ(share[Label::D], 62.5);
  EXPECT_THROW(best_source_share({}), Error);
}

class MiniRun : public ::testing::Test {
 protected:
  PipelineConfig config() {
    auto c = load_config(testing::fixture("mini/mock.yaml"));
    c.cache_dir = dir.path() / "cache";
    return c;
  }
  std::filesystem::path corpus() const { return testing::fixture("mini/corpus.jsonl"); }
  testing::TempDir dir;
};

TEST_F(MiniRun, WritesEveryArtifact) {
  auto manifest = run_pipeline(corpus(), config(), Track::long_track(), dir / "out");
  EXPECT_FALSE(manifest.has_failures());
  ASSERT_EQ(manifest.figures.size(), 5u);
  for (auto name : {files::kKept, files::kRejected, files::kScores, files::kHistogram, files::kCandidates,
                    files::kResults, files::kManifest}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / std::string(name))) << name;
  }
  auto results = testing::read_jsonl(dir / "out" / std::string(files::kResults));
  ASSERT_EQ(results.size(), 5u);
  for (const auto& row : results) {
    const auto& j = row.at("judgment");
    EXPECT_NE(j.at("good"), j.at("bad"));
    EXPECT_EQ(j.at("max_len"), 50);
    EXPECT_EQ(j.at("word_count_ok").get<bool>(),
              word_count(j.at("improved_caption").get<std::string>()) <= 50u);
  }
  auto candidates = testing::read_jsonl(dir / "out" / std::string(files::kCandidates));
  std::size_t with_examples = 0;
  for (const auto& row : candidates) with_examples += row.at("fewshot").empty() ? 0 : 1;
  EXPECT_GT(with_examples, 0u);
}

TEST_F(MiniRun, StagesComposeToRun) {
  auto cfg = config();
  const auto track = Track::short_track();
  run_pipeline(corpus(), cfg, track, dir / "run");

  ingest_corpus(corpus(), dir / "staged");
  {
    PipelineRunner runner(cfg, dir / "staged", corpus().parent_path());
    runner.assess();
  }
  {
    PipelineRunner runner(cfg, dir / "staged", corpus().parent_path());
    runner.generate(corpus());
  }
  {
    PipelineRunner runner(cfg, dir / "staged", corpus().parent_path());
    runner.judge(corpus(), track);
  }
  for (auto name : {files::kKept, files::kRejected, files::kScores, files::kHistogram, files::kCandidates,
                    files::kResults}) {
    EXPECT_EQ(read_file(dir / "run" / std::string(name)), read_file(dir / "staged" / std::string(name))) << name;
  }
}

TEST_F(MiniRun, PerFigureFailuresAreRecorded) {
  auto cfg = config();
  cfg.describer.supports_images = false;  // every describe call now fails its capability check
  auto manifest = run_pipeline(corpus(), cfg, Track::long_track(), dir / "out");
  EXPECT_TRUE(manifest.has_failures());
  for (const auto& f : manifest.figures) {
    EXPECT_FALSE(f.done);
    EXPECT_EQ(f.failed_stage, "describe");
    EXPECT_EQ(f.error, ErrorCode::CapabilityError);
  }
  auto failures = testing::read_jsonl(dir / "out" / "failures" / "generate.jsonl");
  EXPECT_EQ(failures.size(), 5u);
}

TEST_F(MiniRun, ConflictingBackendIdsAreRejected) {
  auto cfg = config();
  cfg.roles[0].backend_id = cfg.roles[1].backend_id;
  EXPECT_THROW(PipelineRunner(cfg, dir / "out", corpus().parent_path()), Error);
}

}  // namespace
}  // namespace mlbcap
