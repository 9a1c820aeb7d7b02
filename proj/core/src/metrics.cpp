#include "mlbcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "mlbcap/digest.hpp"
#include "mlbcap/error.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap::metrics {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::uint64_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::uint64_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::uint64_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

PRF make_prf(std::uint64_t hit, std::uint64_t cand_total, std::uint64_t ref_total) {
  PRF out;
  out.precision = cand_total ? static_cast<double>(hit) / static_cast<double>(cand_total) : 0.0;
  out.recall = ref_total ? static_cast<double>(hit) / static_cast<double>(ref_total) : 0.0;
  out.f1 = harmonic(out.precision, out.recall);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::vector<std::pair<std::string, std::string>> read_id_text(const std::filesystem::path& path,
                                                              bool results) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("figure_id").get<std::string>();
      auto text = results ? j.at("judgment").at("improved_caption").get<std::string>()
                          : j.at("caption").get<std::string>();
      out.emplace_back(std::move(id), std::move(text));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  return split_whitespace(to_lower_ascii(text));
}

PRF rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1) throw Error(ErrorCode::RangeError, "rouge_n needs n >= 1");
  const auto cand = ngrams(tokenize(candidate), static_cast<std::size_t>(n));
  const auto ref = ngrams(tokenize(reference), static_cast<std::size_t>(n));
  auto total = [](const NgramCounts& c) {
    std::uint64_t t = 0;
    for (const auto& kv : c) t += kv.second;
    return t;
  };
  return make_prf(clipped_overlap(cand, ref), total(cand), total(ref));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  return make_prf(lcs_length(cand, ref), cand.size(), ref.size());
}

double bleu4(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "bleu4 needs at least one pair");
  std::array<std::uint64_t, 4> matched{}, possible{};
  std::uint64_t cand_len = 0, ref_len = 0;
  for (const auto& [candidate, reference] : pairs) {
    const auto cand = tokenize(candidate);
    const auto ref = tokenize(reference);
    cand_len += cand.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cg = ngrams(cand, n);
      matched[n - 1] += clipped_overlap(cg, ngrams(ref, n));
      possible[n - 1] += cand.size() >= n ? cand.size() - n + 1 : 0;
    }
  }
  double log_sum = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0 || possible[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(possible[n]));
  }
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double QualityHistogram::percentage(int score) const {
  return total ? 100.0 * static_cast<double>(count(score)) / static_cast<double>(total) : 0.0;
}

double QualityHistogram::percentage_at_least(int threshold) const {
  if (!total) return 0.0;
  std::uint64_t n = 0;
  for (int s = std::max(threshold, 1); s <= 6; ++s) n += count(s);
  return 100.0 * static_cast<double>(n) / static_cast<double>(total);
}

QualityHistogram quality_distribution(const std::vector<int>& scores) {
  QualityHistogram h;
  std::uint64_t weighted = 0;
  for (int s : scores) {
    if (s < 1 || s > 6) throw Error(ErrorCode::RangeError, "score out of range: " + std::to_string(s));
    ++h.counts[static_cast<std::size_t>(s - 1)];
    weighted += static_cast<std::uint64_t>(s);
  }
  h.total = scores.size();
  if (h.total) h.mean = static_cast<double>(weighted) / static_cast<double>(h.total);
  return h;
}

nlohmann::json to_json(const QualityHistogram& h) {
  nlohmann::json counts = nlohmann::json::object(), pct = nlohmann::json::object();
  for (int s = 1; s <= 6; ++s) {
    counts[std::to_string(s)] = h.count(s);
    pct[std::to_string(s)] = h.percentage(s);
  }
  return {{"counts", counts},
          {"percentages", pct},
          {"total", h.total},
          {"mean", h.mean ? nlohmann::json(*h.mean) : nlohmann::json(nullptr)}};
}

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::ShapeError, "kendall_tau: length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::ShapeError, "kendall_tau needs at least two items");
  std::int64_t concordant = 0, discordant = 0, tie_x = 0, tie_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++tie_x;
      if (dy == 0) ++tie_y;
      if (dx == 0 || dy == 0) continue;
      ((dx > 0) == (dy > 0) ? concordant : discordant) += 1;
    }
  }
  const double denom = std::sqrt(static_cast<double>(pairs - tie_x) * static_cast<double>(pairs - tie_y));
  if (denom == 0) throw Error(ErrorCode::Degenerate, "kendall_tau: a variable is constant");
  return static_cast<double>(concordant - discordant) / denom;
}

double fleiss_kappa(const std::vector<std::vector<int>>& table) {
  if (table.empty()) throw Error(ErrorCode::Degenerate, "fleiss_kappa: no items");
  const std::size_t categories = table.front().size();
  if (categories == 0) throw Error(ErrorCode::ShapeError, "fleiss_kappa: no categories");
  long raters = -1;
  for (const auto& row : table) {
    if (row.size() != categories) throw Error(ErrorCode::ShapeError, "fleiss_kappa: ragged table");
    long sum = 0;
    for (int c : row) {
      if (c < 0) throw Error(ErrorCode::ShapeError, "fleiss_kappa: negative count");
      sum += c;
    }
    if (raters < 0) raters = sum;
    if (sum != raters) throw Error(ErrorCode::ShapeError, "fleiss_kappa: unequal rater counts per item");
  }
  if (raters < 2) throw Error(ErrorCode::ShapeError, "fleiss_kappa needs at least two raters per item");

  const double n = static_cast<double>(raters);
  const double items = static_cast<double>(table.size());
  std::vector<double> column(categories, 0.0);
  double p_bar = 0;
  for (const auto& row : table) {
    double agree = 0;
    for (std::size_t j = 0; j < categories; ++j) {
      agree += static_cast<double>(row[j]) * (row[j] - 1);
      column[j] += row[j];
    }
    p_bar += agree / (n * (n - 1));
  }
  p_bar /= items;
  double p_e = 0;
  for (double c : column) {
    const double pj = c / (items * n);
    p_e += pj * pj;
  }
  if (p_e >= 1.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"rouge1_f", r.rouge1_f},
          {"rouge2_f", r.rouge2_f},
          {"rougeL_f", r.rougeL_f},
          {"bleu4", r.bleu4},
          {"n_pairs", r.n_pairs}};
}

Evaluation evaluate(const std::vector<std::pair<std::string, std::string>>& id_and_candidate,
                    const std::vector<std::pair<std::string, std::string>>& id_and_reference) {
  if (id_and_candidate.empty()) throw Error(ErrorCode::EmptyInput, "no results to evaluate");
  std::unordered_map<std::string, const std::string*> refs;
  for (const auto& [id, text] : id_and_reference) refs.emplace(id, &text);

  Evaluation ev;
  std::vector<std::pair<std::string, std::string>> bleu_pairs;
  double r1 = 0, r2 = 0, rl = 0;
  for (const auto& [id, candidate] : id_and_candidate) {
    auto it = refs.find(id);
    if (it == refs.end()) throw Error(ErrorCode::MissingRef, "no reference caption for " + id);
    const auto& reference = *it->second;
    PairScore ps{id, rouge_n(candidate, reference, 1).f1, rouge_n(candidate, reference, 2).f1,
                 rouge_l(candidate, reference).f1};
    r1 += ps.rouge1_f;
    r2 += ps.rouge2_f;
    rl += ps.rougeL_f;
    ev.pairs.push_back(std::move(ps));
    bleu_pairs.emplace_back(candidate, reference);
  }
  const double count = static_cast<double>(ev.pairs.size());
  ev.report = {r1 / count, r2 / count, rl / count, bleu4(bleu_pairs), ev.pairs.size()};
  return ev;
}

Evaluation evaluate_run(const std::filesystem::path& results_path,
                        const std::filesystem::path& references_path) {
  return evaluate(read_id_text(results_path, true), read_id_text(references_path, false));
}

std::string pairs_csv(const Evaluation& evaluation) {
  std::ostringstream out;
  out.precision(17);
  out << "figure_id,rouge1_f,rouge2_f,rougeL_f\n";
  for (const auto& p : evaluation.pairs) {
    out << csv_field(p.figure_id) << ',' << p.rouge1_f << ',' << p.rouge2_f << ',' << p.rougeL_f
        << '\n';
  }
  return out.str();
}

}  // namespace mlbcap::metrics
