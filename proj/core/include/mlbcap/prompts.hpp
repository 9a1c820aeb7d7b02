#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlbcap/candidates.hpp"
#include "mlbcap/corpus.hpp"

namespace mlbcap {

enum class TemplateId {
  QualityAssessment,
  DescriptionLarge,
  DescriptionSimple,
  CaptionFewshot,
  CaptionPlain,
  Judgement,
  Summary,
};

std::string_view to_string(TemplateId id);

/// Name of the golden fixture file holding the template skeleton.
std::string_view template_file_name(TemplateId id);

/// Static template text with placeholders in bracket syntax, e.g. "[Caption]".
std::string_view template_skeleton(TemplateId id);

/// Whether the rendered prompt must carry a figure image.
bool template_requires_image(TemplateId id);

struct RenderedPrompt {
  std::string text;
  std::optional<std::string> image_ref;
  TemplateId template_id;
  /// Placeholder (with brackets) -> substituted value.
  std::map<std::string, std::string> placeholder_fill;
};

enum class TrackKind { Long, Short };

struct Track {
  TrackKind kind = TrackKind::Long;
  int max_len_words = 50;

  static Track long_track(int max_len = 50);
  static Track short_track(int max_len = 30);
  /// "long" or "short"; throws Error(Config) otherwise.
  static Track parse(std::string_view name, int long_len = 50, int short_len = 30);
};

std::string_view to_string(TrackKind kind);

inline constexpr std::size_t kDefaultTokenLimit = 512;

/// Joins paragraphs with '\n'. If the join has more than `limit_tokens`
/// whitespace tokens the first `limit_tokens` are re-joined with single spaces.
std::string concat_and_truncate_paragraphs(const std::vector<std::string>& paragraphs,
                                           std::size_t limit_tokens = kDefaultTokenLimit);

/// Throws Error(ImageRequired) when the record has no image.
RenderedPrompt render_quality_assessment(const FigureRecord& record,
                                         std::size_t limit_tokens = kDefaultTokenLimit);

/// The caller attaches the image.
RenderedPrompt render_description_large(std::string_view figure_type, std::string_view subject);
RenderedPrompt render_description_simple();

/// With `fewshot` the "Best Caption Examples" block lists one "- " line per
/// example; without it the block and its heading are omitted.
RenderedPrompt render_caption_prompt(const FigureRecord& record, std::string_view description,
                                     const std::optional<FewShotSet>& fewshot,
                                     std::size_t limit_tokens = kDefaultTokenLimit);

/// Summarization-style prompt for the summarizer role: paragraphs and OCR only.
RenderedPrompt render_summary_prompt(const FigureRecord& record,
                                     std::size_t limit_tokens = kDefaultTokenLimit);

/// Throws Error(CandidatesIncomplete) unless all four labels are present.
RenderedPrompt render_judgement(const CandidateSet& candidates, std::string_view description,
                                const std::vector<std::string>& paragraphs,
                                const std::vector<std::string>& mentions, const Track& track,
                                std::size_t limit_tokens = kDefaultTokenLimit);

/// Placeholder names used by any template, brackets included.
const std::vector<std::string>& all_placeholders();

}  // namespace mlbcap
