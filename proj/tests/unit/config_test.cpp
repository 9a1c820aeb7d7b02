#include <gtest/gtest.h>

#include "mlbcap/config.hpp"
#include "mlbcap/error.hpp"
#include "support.hpp"

namespace mlbcap {
namespace {

const std::string kBackends = R"(
backends:
  rater: {kind: mock, supports_images: true}
  describer: {kind: mock, supports_images: true}
  judge: {id: j, kind: http_chat, endpoint: "http://localhost:9/v1/chat/completions", model: gpt, api_key_env: KEY}
  A: {seed: 1}
  B: {seed: 2}
  C: {seed: 3}
  D: {seed: 4, max_in_flight: 2}
)";

ErrorCode code_of(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // sentinel: no error
}

TEST(Config, DefaultsAndBackendFields) {
  auto c = parse_config("seed: 3\nlimits: {permits: 6}\n" + kBackends, "/cfg");
  EXPECT_EQ(c.track, "long");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.max_len_long, 50);
  EXPECT_EQ(c.max_len_short, 30);
  EXPECT_EQ(c.token_limit, 512u);
  EXPECT_EQ(c.quality_threshold, 5);
  EXPECT_EQ(c.fewshot_k, 10u);
  EXPECT_FALSE(c.judge_image);
  EXPECT_EQ(c.describe_style, DescribeStyle::Large);
  EXPECT_FALSE(c.test_corpus);

  EXPECT_EQ(c.rater.backend_id, "rater");
  EXPECT_TRUE(c.rater.supports_images);
  EXPECT_EQ(c.judge.backend_id, "j");
  EXPECT_EQ(c.judge.kind, BackendKind::HttpChat);
  EXPECT_EQ(c.judge.max_retries, 3);
  EXPECT_EQ(c.judge.timeout.count(), 60000);
  EXPECT_EQ(c.judge.api_key_env, "KEY");
  EXPECT_EQ(c.roles[0].backend_id, "A");
  EXPECT_EQ(c.roles[3].seed, 4u);
  EXPECT_EQ(c.roles[3].max_in_flight, 2);
  EXPECT_EQ(c.roles[0].max_in_flight, 6);
}

TEST(Config, RelativeTestCorpusResolvesAgainstConfigDir) {
  auto c = parse_config("test_corpus: test.jsonl\n" + kBackends, "/etc/run");
  ASSERT_TRUE(c.test_corpus);
  EXPECT_EQ(*c.test_corpus, std::filesystem::path("/etc/run/test.jsonl"));
}

TEST(Config, Rejections) {
  EXPECT_EQ(code_of("bogus: 1\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("limits: {workers: 0}\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("limits: {quality_threshold: 7}\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("limits: {unknown: 1}\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("track: medium\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("describe_style: huge\n" + kBackends), ErrorCode::Config);
  EXPECT_EQ(code_of("seed: [1\n"), ErrorCode::Config);
  EXPECT_EQ(code_of("seed: 1\n"), ErrorCode::Config);
  EXPECT_EQ(code_of("seed: abc\n" + kBackends), ErrorCode::Config);
  std::string missing_d = kBackends.substr(0, kBackends.find("  D:"));
  EXPECT_EQ(code_of(missing_d), ErrorCode::Config);
  std::string bad_kind = kBackends;
  bad_kind.replace(bad_kind.find("A: {seed: 1}"), 12, "A: {kind: grpc}");
  EXPECT_EQ(code_of(bad_kind), ErrorCode::Config);
  std::string extra_key = kBackends;
  extra_key.replace(extra_key.find("A: {seed: 1}"), 12, "A: {api_key: sk-123}");
  EXPECT_EQ(code_of(extra_key), ErrorCode::Config);
}

TEST(Config, DigestChangesWithSettings) {
  auto a = parse_config(kBackends);
  auto b = parse_config("seed: 1\n" + kBackends);
  auto c = parse_config("track: short\n" + kBackends);
  EXPECT_EQ(a.digest(), parse_config(kBackends).digest());
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_NE(a.digest(), c.digest());
}

TEST(Config, FixtureConfigLoads) {
  auto c = load_config(testing::fixture("mini/mock.yaml"));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.fewshot_k, 3u);
  EXPECT_EQ(c.roles[1].backend_id, "mock-finetuned-1");
}

}  // namespace
}  // namespace mlbcap
