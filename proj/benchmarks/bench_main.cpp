#include <benchmark/benchmark.h>

#include <random>

#include "mlbcap/backends.hpp"
#include "mlbcap/metrics.hpp"
#include "mlbcap/prompts.hpp"

namespace {

using namespace mlbcap;

std::string random_caption(std::mt19937& rng, int words) {
  static const std::vector<std::string> vocab{"accuracy", "model", "the", "of", "baseline", "fig.", "loss",
                                              "training", "improves", "over", "epochs", "ours"};
  std::string out;
  for (int i = 0; i < words; ++i) out += vocab[rng() % vocab.size()] + " ";
  return out;
}

void BM_RougeL(benchmark::State& state) {
  std::mt19937 rng(1);
  const auto a = random_caption(rng, static_cast<int>(state.range(0)));
  const auto b = random_caption(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::rouge_l(a, b));
}
BENCHMARK(BM_RougeL)->Arg(30)->Arg(60)->Arg(120);

void BM_Rouge2(benchmark::State& state) {
  std::mt19937 rng(2);
  const auto a = random_caption(rng, static_cast<int>(state.range(0)));
  const auto b = random_caption(rng, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::rouge_n(a, b, 2));
}
BENCHMARK(BM_Rouge2)->Arg(30)->Arg(120);

void BM_CorpusBleu(benchmark::State& state) {
  std::mt19937 rng(3);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < state.range(0); ++i) pairs.emplace_back(random_caption(rng, 40), random_caption(rng, 40));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu4(pairs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorpusBleu)->Arg(100)->Arg(1000);

void BM_FleissKappa(benchmark::State& state) {
  std::mt19937 rng(4);
  std::vector<std::vector<int>> table(static_cast<std::size_t>(state.range(0)), std::vector<int>(4, 0));
  for (auto& row : table) {
    for (int r = 0; r < 3; ++r) ++row[rng() % 4];
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::fleiss_kappa(table));
}
BENCHMARK(BM_FleissKappa)->Arg(200)->Arg(5000);

void BM_RenderJudgement(benchmark::State& state) {
  std::mt19937 rng(5);
  CandidateSet set{"f", {}};
  for (Label l : kAllLabels) set.candidates.push_back({l, random_caption(rng, 40), "b"});
  std::vector<std::string> paragraphs;
  for (int i = 0; i < 8; ++i) paragraphs.push_back(random_caption(rng, 120));
  const std::vector<std::string> mentions{random_caption(rng, 25)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_judgement(set, "A description.", paragraphs, mentions, Track::long_track()));
  }
}
BENCHMARK(BM_RenderJudgement);

void BM_ExtractJson(benchmark::State& state) {
  const std::string reply =
      "Sure, here is my assessment of the {four} candidates.\n```json\n"
      R"({"Good": "D", "Bad": "A", "Improved Caption": "Fig. 3. Accuracy {top-1} over 90 epochs."})"
      "\n```\nLet me know if you need anything else.";
  for (auto _ : state) benchmark::DoNotOptimize(extract_json_object(reply));
}
BENCHMARK(BM_ExtractJson);

}  // namespace

BENCHMARK_MAIN();
