#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/evalserve.hpp"
#include "support.hpp"

namespace mlbcap::evalserve {
namespace {

using testing::TempDir;

std::vector<TaskSource> sources(int n) {
  std::vector<TaskSource> out;
  for (int f = 1; f <= n; ++f) {
    TaskSource s;
    s.figure_id = "fig" + std::to_string(f);
    for (Label l : kAllLabels) s.candidates[l] = std::string(to_string(l)) + " caption for " + s.figure_id;
    out.push_back(std::move(s));
  }
  return out;
}

AnnotationResponse bw(const std::string& task, const std::string& judge, const std::string& best,
                      const std::string& worst) {
  AnnotationResponse r;
  r.task_id = task;
  r.judge_id = judge;
  r.best = best;
  r.worst = worst;
  return r;
}

AnnotationResponse ranked(const std::string& task, const std::string& judge, std::vector<std::string> order) {
  AnnotationResponse r;
  r.task_id = task;
  r.judge_id = judge;
  r.ranking = std::move(order);
  return r;
}

std::string key_for(const AnnotationTask& task, Label label) {
  for (const auto& d : task.shuffled) {
    if (d.hidden_label == label) return d.display_key;
  }
  return {};
}

ErrorCode submit_error(AnnotationStore& store, const AnnotationResponse& r) {
  try {
    store.submit(r);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

TEST(Tasks, ShuffleIsDeterministicPerFigure) {
  auto a = create_tasks(sources(5), Mode::BestWorst, 7, Track::long_track());
  auto b = create_tasks(sources(5), Mode::BestWorst, 7, Track::long_track());
  auto reversed_sources = sources(5);
  std::reverse(reversed_sources.begin(), reversed_sources.end());
  auto c = create_tasks(reversed_sources, Mode::BestWorst, 7, Track::long_track());
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0].task_id, "task-0001");
  std::set<std::string> orders;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::string order, order_b, order_c;
    for (const auto& d : a[i].shuffled) order += to_string(d.hidden_label);
    for (const auto& d : b[i].shuffled) order_b += to_string(d.hidden_label);
    for (const auto& d : c[a.size() - 1 - i].shuffled) order_c += to_string(d.hidden_label);
    EXPECT_EQ(order, order_b);
    EXPECT_EQ(order, order_c);
    orders.insert(order);
    EXPECT_EQ(a[i].shuffled[0].display_key, "1");
  }
  EXPECT_GT(orders.size(), 1u);
}

TEST(Tasks, IncompleteSetsAreSkipped) {
  auto src = sources(3);
  src[1].candidates.erase(Label::C);
  auto tasks = create_tasks(src, Mode::Rank, 1, Track::short_track());
  ASSERT_EQ(tasks.size(), 2u);
  EXPECT_EQ(tasks[1].figure_id, "fig3");
  EXPECT_EQ(tasks[1].mode, Mode::Rank);
}

TEST(Tasks, FromResultsFile) {
  TempDir dir;
  write_file_atomic(dir / "results.jsonl",
                    R"({"figure_id":"f1","candidates":{"A":"a","B":"b","C":"c","D":"d"},"judgment":{}})"
                    "\n");
  auto tasks = create_tasks(dir / "results.jsonl", Mode::BestWorst, 3, Track::long_track(), {{"f1", "img/f1.png"}});
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].image_ref, "img/f1.png");
}

TEST(Tasks, ClientViewHidesSources) {
  auto tasks = create_tasks(sources(1), Mode::BestWorst, 7, Track::long_track());
  auto view = client_view(tasks[0]);
  ASSERT_EQ(view.at("candidates").size(), 4u);
  EXPECT_EQ(view.dump().find("hidden"), std::string::npos);
  for (const auto& c : view.at("candidates")) {
    EXPECT_EQ(c.size(), 2u);
    EXPECT_TRUE(c.contains("display_key"));
    EXPECT_TRUE(c.contains("text"));
  }
  EXPECT_EQ(parse_mode("best_worst"), Mode::BestWorst);
  EXPECT_THROW(parse_mode("pairwise"), Error);
}

TEST(Store, ValidationRules) {
  TempDir dir;
  AnnotationStore store(create_tasks(sources(2), Mode::BestWorst, 1, Track::long_track()), dir / "log.jsonl");
  EXPECT_EQ(submit_error(store, bw("task-0001", "j", "1", "1")), ErrorCode::Validation);
  EXPECT_EQ(submit_error(store, bw("task-0001", "j", "1", "5")), ErrorCode::Validation);
  EXPECT_EQ(submit_error(store, bw("task-0001", "", "1", "2")), ErrorCode::Validation);
  EXPECT_EQ(submit_error(store, ranked("task-0001", "j", {"1", "2", "3", "4"})), ErrorCode::Validation);
  EXPECT_EQ(submit_error(store, bw("task-9999", "j", "1", "2")), ErrorCode::NotFound);
  EXPECT_EQ(store.stored_responses(), 0u);

  TempDir rank_dir;
  AnnotationStore rank_store(create_tasks(sources(1), Mode::Rank, 1, Track::long_track()), rank_dir / "log.jsonl");
  EXPECT_EQ(submit_error(rank_store, ranked("task-0001", "j", {"1", "2", "3"})), ErrorCode::Validation);
  EXPECT_EQ(submit_error(rank_store, ranked("task-0001", "j", {"1", "2", "2", "4"})), ErrorCode::Validation);
  EXPECT_EQ(submit_error(rank_store, bw("task-0001", "j", "1", "2")), ErrorCode::Validation);
  EXPECT_FALSE(rank_store.submit(ranked("task-0001", "j", {"4", "3", "2", "1"})).duplicate);
}

TEST(Store, IdempotentResubmissionAndConflict) {
  TempDir dir;
  AnnotationStore store(create_tasks(sources(2), Mode::BestWorst, 1, Track::long_track()), dir / "log.jsonl");
  EXPECT_FALSE(store.submit(bw("task-0001", "j", "1", "2")).duplicate);
  EXPECT_TRUE(store.submit(bw("task-0001", "j", "1", "2")).duplicate);
  EXPECT_EQ(submit_error(store, bw("task-0001", "j", "3", "2")), ErrorCode::Conflict);
  EXPECT_EQ(store.stored_responses(), 1u);
  EXPECT_EQ(testing::read_jsonl(dir / "log.jsonl").size(), 1u);
}

TEST(Store, NextTaskAndProgressPerJudge) {
  TempDir dir;
  AnnotationStore store(create_tasks(sources(2), Mode::BestWorst, 1, Track::long_track()), dir / "log.jsonl");
  EXPECT_EQ(store.next_task("a")->task_id, "task-0001");
  store.submit(bw("task-0001", "a", "1", "2"));
  EXPECT_EQ(store.next_task("a")->task_id, "task-0002");
  EXPECT_EQ(store.next_task("b")->task_id, "task-0001");
  store.submit(bw("task-0002", "a", "1", "2"));
  EXPECT_FALSE(store.next_task("a"));
  EXPECT_EQ(store.progress("a").answered, 2u);
  EXPECT_EQ(store.progress("a").total, 2u);
  EXPECT_EQ(store.progress("b").answered, 0u);
}

TEST(Store, ReplaysLogAfterRestart) {
  TempDir dir;
  const auto tasks = create_tasks(sources(2), Mode::BestWorst, 1, Track::long_track());
  {
    AnnotationStore store(tasks, dir / "log.jsonl");
    store.submit(bw("task-0001", "a", "1", "2"));
  }
  {
    // Simulate a torn write from a crash.
    std::FILE* f = std::fopen((dir / "log.jsonl").c_str(), "ab");
    std::fputs("{\"task_id\":\"task-00", f);
    std::fclose(f);
  }
  AnnotationStore store(tasks, dir / "log.jsonl");
  EXPECT_EQ(store.stored_responses(), 1u);
  EXPECT_TRUE(store.submit(bw("task-0001", "a", "1", "2")).duplicate);
  EXPECT_EQ(store.next_task("a")->task_id, "task-0002");
}

TEST(Store, ExportMapsDisplayKeysBackToLabels) {
  TempDir dir;
  auto tasks = create_tasks(sources(1), Mode::BestWorst, 5, Track::long_track());
  AnnotationStore store(tasks, dir / "log.jsonl");
  store.submit(bw("task-0001", "j", key_for(tasks[0], Label::D), key_for(tasks[0], Label::A)));
  auto ex = store.export_annotations();
  ASSERT_EQ(ex.rows.size(), 1u);
  EXPECT_EQ(ex.rows[0].best, Label::D);
  EXPECT_EQ(ex.rows[0].worst, Label::A);
  auto round_trip = export_from_json(to_json(ex));
  EXPECT_EQ(round_trip.rows[0].best, Label::D);
}

TEST(Store, RankExportIsIndexedByLabel) {
  TempDir dir;
  auto tasks = create_tasks(sources(1), Mode::Rank, 5, Track::long_track());
  AnnotationStore store(tasks, dir / "log.jsonl");
  const auto& t = tasks[0];
  store.submit(ranked("task-0001", "j",
                      {key_for(t, Label::C), key_for(t, Label::A), key_for(t, Label::D), key_for(t, Label::B)}));
  auto row = store.export_annotations().rows.at(0);
  ASSERT_TRUE(row.rank_by_label);
  EXPECT_EQ(*row.rank_by_label, (std::array<int, 4>{2, 4, 1, 3}));
}

TEST(Agreement, BestWorstKappa) {
  AnnotationExport ex;
  // Two judges, three figures. Best: agree, agree, disagree. Worst: always agree.
  const std::array<std::array<Label, 4>, 3> picks{{{Label::A, Label::B, Label::A, Label::B},
                                                   {Label::C, Label::D, Label::C, Label::D},
                                                   {Label::A, Label::C, Label::B, Label::C}}};
  for (std::size_t f = 0; f < picks.size(); ++f) {
    const std::string fig = "f" + std::to_string(f);
    ex.rows.push_back({fig, "j1", picks[f][0], picks[f][1], std::nullopt});
    ex.rows.push_back({fig, "j2", picks[f][2], picks[f][3], std::nullopt});
  }
  auto r = agreement(ex, Mode::BestWorst);
  EXPECT_EQ(r.n_items, 3u);
  EXPECT_EQ(r.n_raters, 2u);
  // Best table {2,0,0,0},{0,0,2,0},{1,1,0,0}: Pbar = 2/3, p = (1/2, 1/6, 1/3, 0), Pe = 7/18.
  EXPECT_NEAR(*r.fleiss_kappa, (2.0 / 3 - 7.0 / 18) / (1 - 7.0 / 18), 1e-12);
  // Worst table {0,2,0,0},{0,0,0,2},{0,0,2,0}: Pbar = 1, Pe = 1/3.
  EXPECT_NEAR(*r.fleiss_kappa_worst, 1.0, 1e-12);
}

TEST(Agreement, RankTauAndDegenerateCases) {
  AnnotationExport ex;
  ex.rows.push_back({"f1", "j1", std::nullopt, std::nullopt, std::array<int, 4>{1, 2, 3, 4}});
  ex.rows.push_back({"f1", "j2", std::nullopt, std::nullopt, std::array<int, 4>{2, 1, 3, 4}});
  ex.rows.push_back({"f2", "j1", std::nullopt, std::nullopt, std::array<int, 4>{1, 2, 3, 4}});
  auto r = agreement(ex, Mode::Rank);
  EXPECT_EQ(r.n_items, 1u);
  EXPECT_NEAR(*r.kendall_tau, 2.0 / 3, 1e-12);

  AnnotationExport single;
  single.rows.push_back({"f1", "j1", Label::A, Label::B, std::nullopt});
  EXPECT_THROW(agreement(single, Mode::BestWorst), Error);

  AnnotationExport disjoint;
  disjoint.rows.push_back({"f1", "j1", Label::A, Label::B, std::nullopt});
  disjoint.rows.push_back({"f2", "j2", Label::A, Label::B, std::nullopt});
  try {
    agreement(disjoint, Mode::BestWorst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

class ServerTest : public ::testing::Test {
 protected:
  void start(Mode mode) {
    auto src = sources(3);
    src[0].image_ref = "images/fig1.png";
    store = std::make_unique<AnnotationStore>(create_tasks(src, mode, 11, Track::long_track()), dir / "log.jsonl");
    server = std::make_unique<AnnotationServer>(*store, ServerOptions{"tok", testing::fixture("mini"), std::nullopt});
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->serve(); });
  }
  void TearDown() override {
    if (server) server->stop();
    if (thread.joinable()) thread.join();
  }
  TempDir dir;
  std::unique_ptr<AnnotationStore> store;
  std::unique_ptr<AnnotationServer> server;
  std::thread thread;
  int port = 0;
};

TEST_F(ServerTest, NextTaskSubmitAndProgress) {
  start(Mode::BestWorst);
  auto next = testing::http_get(port, "/api/tasks/next?judge=alice");
  ASSERT_EQ(next.status, 200);
  auto body = nlohmann::json::parse(next.body);
  EXPECT_FALSE(body.at("done").get<bool>());
  EXPECT_EQ(body.at("progress").at("total"), 3);
  EXPECT_EQ(body.at("task").at("image_url"), "/api/figures/fig1/image");
  const auto task_id = body.at("task").at("task_id").get<std::string>();

  nlohmann::json response{{"task_id", task_id}, {"judge_id", "alice"}, {"best", "2"}, {"worst", "3"}};
  auto posted = testing::http_post(port, "/api/responses", response.dump());
  EXPECT_EQ(posted.status, 201);
  EXPECT_FALSE(nlohmann::json::parse(posted.body).at("duplicate").get<bool>());
  auto again = testing::http_post(port, "/api/responses", response.dump());
  EXPECT_EQ(again.status, 200);
  EXPECT_TRUE(nlohmann::json::parse(again.body).at("duplicate").get<bool>());

  response["best"] = "4";
  auto conflict = testing::http_post(port, "/api/responses", response.dump());
  EXPECT_EQ(conflict.status, 409);
  EXPECT_EQ(nlohmann::json::parse(conflict.body).at("code"), "CONFLICT");

  auto progress = nlohmann::json::parse(testing::http_get(port, "/api/progress?judge=alice").body);
  EXPECT_EQ(progress.at("answered"), 1);
}

TEST_F(ServerTest, ErrorStatuses) {
  start(Mode::BestWorst);
  EXPECT_EQ(testing::http_get(port, "/api/tasks/next").status, 400);
  EXPECT_EQ(testing::http_post(port, "/api/responses", "not json").status, 400);
  EXPECT_EQ(testing::http_post(port, "/api/responses", R"({"task_id":"task-0001","judge_id":"a","best":"1","worst":"1"})")
                .status,
            400);
  EXPECT_EQ(testing::http_post(port, "/api/responses", R"({"task_id":"x","judge_id":"a","best":"1","worst":"2"})").status,
            404);
  EXPECT_EQ(testing::http_get(port, "/api/figures/fig2/image").status, 404);
  auto image = testing::http_get(port, "/api/figures/fig1/image");
  EXPECT_EQ(image.status, 200);
  EXPECT_EQ(image.body, read_file(testing::fixture("mini/images/fig1.png")));
}

TEST_F(ServerTest, ExportNeedsOperatorToken) {
  start(Mode::BestWorst);
  EXPECT_EQ(testing::http_get(port, "/api/export").status, 401);
  EXPECT_EQ(testing::http_get(port, "/api/export", "wrong").status, 401);
  for (const std::string judge : {"a", "b"}) {
    for (const auto& t : store->tasks()) {
      testing::http_post(port, "/api/responses",
                         nlohmann::json{{"task_id", t.task_id}, {"judge_id", judge}, {"best", "1"}, {"worst", "2"}}.dump());
    }
  }
  auto ex = testing::http_get(port, "/api/export", "tok");
  ASSERT_EQ(ex.status, 200);
  auto body = nlohmann::json::parse(ex.body);
  EXPECT_EQ(body.at("annotations").at("rows").size(), 6u);
  EXPECT_DOUBLE_EQ(body.at("agreement").at("fleiss_kappa").get<double>(), 1.0);
}

TEST(Deidentification, FullSessionLeaksNothing) {
  auto scan = testing::deidentification_session();
  EXPECT_GT(scan.responses, 50u);
  for (const auto& v : scan.violations) ADD_FAILURE() << v;
}

}  // namespace
}  // namespace mlbcap::evalserve
