#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace mlbcap::metrics {

// Tokenization for ROUGE and BLEU: ASCII-lowercased whitespace tokens, no
// stemming and no stopword removal.
std::vector<std::string> tokenize(std::string_view text);

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Clipped n-gram overlap. Zero denominators give 0 for that component.
PRF rouge_n(std::string_view candidate, std::string_view reference, int n);

/// Longest-common-subsequence based ROUGE-L.
PRF rouge_l(std::string_view candidate, std::string_view reference);

/// Token-level LCS length.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Corpus-level BLEU-4 with uniform weights, brevity penalty and no
/// smoothing. Throws Error(EmptyInput) on an empty list.
double bleu4(const std::vector<std::pair<std::string, std::string>>& pairs);

struct QualityHistogram {
  std::array<std::uint64_t, 6> counts{};  // index 0 is score 1
  std::uint64_t total = 0;
  std::optional<double> mean;  // absent when total == 0

  std::uint64_t count(int score) const { return counts.at(static_cast<std::size_t>(score - 1)); }
  /// Share of `score` in percent; 0 when empty.
  double percentage(int score) const;
  /// Share of scores >= threshold in percent.
  double percentage_at_least(int threshold) const;
};

/// Throws Error(RangeError) for values outside 1..6.
QualityHistogram quality_distribution(const std::vector<int>& scores);

nlohmann::json to_json(const QualityHistogram& h);

/// Kendall tau-b. Throws Error(ShapeError) on length mismatch or fewer than two
/// items and Error(Degenerate) when either variable is constant.
double kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

/// Fleiss' kappa over an items x categories table of rating counts. Every row
/// must sum to the same rater count r >= 2 (Error(ShapeError) otherwise).
/// Perfect agreement on a single category, where expected agreement is 1,
/// yields 1.0.
double fleiss_kappa(const std::vector<std::vector<int>>& table);

struct MetricReport {
  double rouge1_f = 0;
  double rouge2_f = 0;
  double rougeL_f = 0;
  double bleu4 = 0;
  std::size_t n_pairs = 0;
};

nlohmann::json to_json(const MetricReport& report);

struct PairScore {
  std::string figure_id;
  double rouge1_f = 0;
  double rouge2_f = 0;
  double rougeL_f = 0;
};

struct Evaluation {
  MetricReport report;
  std::vector<PairScore> pairs;
};

/// Compares each result's improved caption to the reference caption of the
/// same figure. ROUGE values are means of per-pair F1; BLEU is corpus-level.
/// Throws Error(MissingRef) naming the first figure without a reference.
Evaluation evaluate(const std::vector<std::pair<std::string, std::string>>& id_and_candidate,
                    const std::vector<std::pair<std::string, std::string>>& id_and_reference);

/// File-level wrapper: results JSONL from the pipeline and references JSONL
/// with {figure_id, caption}.
Evaluation evaluate_run(const std::filesystem::path& results_path,
                        const std::filesystem::path& references_path);

std::string pairs_csv(const Evaluation& evaluation);

}  // namespace mlbcap::metrics
