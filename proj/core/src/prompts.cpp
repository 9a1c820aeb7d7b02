#include "mlbcap/prompts.hpp"

#include <algorithm>

#include "mlbcap/error.hpp"
#include "mlbcap/text.hpp"

namespace mlbcap {
namespace {

// Template skeletons. The golden files under core/templates/ must stay
// byte-identical to these.
constexpr std::string_view kQualityAssessment = R"tpl([Figure]

### Paragraphs

[Paragraphs]

### Caption

[Caption]

Given the figure, paragraphs and caption, please rate the level of usefulness of the caption from 1 to 6 based on how well the caption could help readers understand the important information. 6 is the highest. 1 is the lowest. The answer should be JSON format: {"rating": }.)tpl";

constexpr std::string_view kDescriptionLarge = R"tpl([Figure]

Your task is to describe a figure from a scientific paper.

Answer your results in JSON format.

### Background

Figure is a [Figure Type].

It is a figure about the topic [Subject].

### Rule

Description of the figure should be accurate and clear. If in doubt, avoid numerical expressions. Provide the description in JSON format with the following key: description.)tpl";

constexpr std::string_view kDescriptionSimple = R"tpl([Figure]

What is in the image?)tpl";

constexpr std::string_view kCaptionFewshot = R"tpl(Your task is to create a caption that summarizes based on a paragraph.

### Figure Caption

The format of a Figure Caption is Declarative title + Description + Statistical
information (optional).

Declarative title: summarises the result or major finding of the data you are presenting in the
figure. (A mere representation of the x and y axes cannot be a title.)

Description: a brief description of the results necessary for understanding the figure without
having to refer to the main text

Statistical information: for example, number of replicates, asterisks denoting P-values,
statistical tests, etc.

### Background

Figure is a [Figure Type].

Figure is a category related to [Subject].

### Rule

Caption MUST have a word count of 60 words or less.

Caption MUST have a tone and sentence structure appropriate for a top-tier conference (e.g.,
NeurIPS, ICLR, CVPR, ACL, EMNLP).

It is not a caption to describe the x-axis y-axis.

Caption MUST be clear, concise, consistent, and provide specific information, especially not
false.

If the given paragraph uses abbreviations, use them in the caption.

### Best Caption Examples

[Few-shot Examples]

### Input

Paragraph:
[Paragraphs]

Figure Summary:
[Figure Description]

Mention:
[Mentions]

OCR text:
[OCR]

### Output format

Answer results in JSON format: {"caption": }.)tpl";

constexpr std::string_view kCaptionPlain = R"tpl(Your task is to create a caption that summarizes based on a paragraph.

### Figure Caption

The format of a Figure Caption is Declarative title + Description + Statistical
information (optional).

Declarative title: summarises the result or major finding of the data you are presenting in the
figure. (A mere representation of the x and y axes cannot be a title.)

Description: a brief description of the results necessary for understanding the figure without
having to refer to the main text

Statistical information: for example, number of replicates, asterisks denoting P-values,
statistical tests, etc.

### Background

Figure is a [Figure Type].

Figure is a category related to [Subject].

### Rule

Caption MUST have a word count of 60 words or less.

Caption MUST have a tone and sentence structure appropriate for a top-tier conference (e.g.,
NeurIPS, ICLR, CVPR, ACL, EMNLP).

It is not a caption to describe the x-axis y-axis.

Caption MUST be clear, concise, consistent, and provide specific information, especially not
false.

If the given paragraph uses abbreviations, use them in the caption.

### Input

Paragraph:
[Paragraphs]

Figure Summary:
[Figure Description]

Mention:
[Mentions]

OCR text:
[OCR]

### Output format

Answer results in JSON format: {"caption": }.)tpl";

constexpr std::string_view kJudgement = R"tpl(A good figure caption should include the following elements:

1. **Clear Description**: Clearly describe what the figure represents so that readers can understand
the main point of the figure just by reading the caption.

2. **Conciseness**: Keep it concise while including all essential information. The caption MUST be
brief yet informative (important!!).

3. **Relevant Information**: Include background information, experimental conditions, or methods
used that are necessary to understand the figure. This helps the reader interpret the data correctly.

4. **Consistency**: Maintain consistency with the rest of the paper in terms of terminology and style.
Ensure that the terms used in the caption match those used in the text.

5. **Citation**: If necessary, include citations of related research or references in the paragraph.


You are given a summarization of the figure, relevant paragraphs, a mentioned sentences, and four
caption candidates:


### Summarization of the Figure

[Figure Description]


### Paragraph

[Paragraphs]


### Mention

[Mentions]


### Caption A

[Pegasus Caption]


### Caption B

[LLaMA-3-8B Caption]

### Caption C

[Yi-1.5-9B Caption]


### Caption D

[GPT-4o Caption]


1. Choose the best and worst caption and answer in JSON format (For example, if A is the best and B
is the worst, the answer is: {{"Good": "A", "Bad": "B}}). Candidate captions shouldn't be scored low
just because they're concise.

2. If even the best caption could be improved, use the candidate captions and paragraphs to improve it
(math symbols, legend, grammar, etc.).

3. The improved sentence should have a tone and sentence structure appropriate for a top-tier
conference (e.g., NeurIPS, ICLR, CVPR, ACL, EMNLP) and MUST have a word count of [Max Len] words or less.

4. If you find that sentences are becoming long and complex, making it difficult for readers to
understand, break the sentences up to effectively convey the important information.

5. If you already provided a perfect caption, keep it the same.

6. Do not omit the figure numbers, such as in "Fig. 3" or "Figure 5".
Provide them in JSON format with the following keys: Good, Bad,
Improved Caption
{{"Good" : "", "Bad" : "", "Improved Caption": ""}})tpl";

constexpr std::string_view kSummary = R"tpl(Summarize the figure-mentioning paragraphs and OCR text below into a caption for the figure. Answer with the caption text only.

### Paragraphs

[Paragraphs]

### OCR text

[OCR])tpl";

constexpr std::string_view kFigure = "[Figure]";
constexpr std::string_view kParagraphs = "[Paragraphs]";
constexpr std::string_view kCaption = "[Caption]";
constexpr std::string_view kFigureType = "[Figure Type]";
constexpr std::string_view kSubject = "[Subject]";
constexpr std::string_view kFewShot = "[Few-shot Examples]";
constexpr std::string_view kMentions = "[Mentions]";
constexpr std::string_view kOcr = "[OCR]";
constexpr std::string_view kDescription = "[Figure Description]";
constexpr std::string_view kMaxLen = "[Max Len]";
constexpr std::string_view kCaptionA = "[Pegasus Caption]";
constexpr std::string_view kCaptionB = "[LLaMA-3-8B Caption]";
constexpr std::string_view kCaptionC = "[Yi-1.5-9B Caption]";
constexpr std::string_view kCaptionD = "[GPT-4o Caption]";

constexpr std::string_view slot_placeholder(Label label) {
  switch (label) {
    case Label::A: return kCaptionA;
    case Label::B: return kCaptionB;
    case Label::C: return kCaptionC;
    case Label::D: return kCaptionD;
  }
  return kCaptionA;
}

using Fill = std::map<std::string, std::string>;

// Single left-to-right pass: substituted values are never rescanned, so
// user text that happens to contain "[Caption]" is left alone.
std::string substitute(std::string_view skeleton, const Fill& fill) {
  std::string out;
  out.reserve(skeleton.size() + 256);
  std::size_t i = 0;
  while (i < skeleton.size()) {
    if (skeleton[i] == '[') {
      bool matched = false;
      for (const auto& [key, value] : fill) {
        if (skeleton.compare(i, key.size(), key) == 0) {
          out.append(value);
          i += key.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(skeleton[i++]);
  }
  return out;
}

// The figure is attached as an image content part, not as text, so the
// leading "[Figure]" line and the blank line after it are dropped.
std::string_view strip_figure_line(std::string_view skeleton) {
  constexpr std::string_view prefix = "[Figure]\n\n";
  if (skeleton.substr(0, prefix.size()) == prefix) skeleton.remove_prefix(prefix.size());
  return skeleton;
}

std::string bullet_lines(const FewShotSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    if (i) out.push_back('\n');
    out.append("- ").append(set.examples[i].caption);
  }
  return out;
}

std::string join_lines(const std::vector<std::string>& items) { return join(items, "\n"); }

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::QualityAssessment: return "QUALITY_ASSESSMENT";
    case TemplateId::DescriptionLarge: return "DESCRIPTION_LARGE";
    case TemplateId::DescriptionSimple: return "DESCRIPTION_SIMPLE";
    case TemplateId::CaptionFewshot: return "CAPTION_FEWSHOT";
    case TemplateId::CaptionPlain: return "CAPTION_PLAIN";
    case TemplateId::Judgement: return "JUDGEMENT";
    case TemplateId::Summary: return "SUMMARY";
  }
  return "UNKNOWN";
}

std::string_view template_file_name(TemplateId id) {
  switch (id) {
    case TemplateId::QualityAssessment: return "quality_assessment.txt";
    case TemplateId::DescriptionLarge: return "description_large.txt";
    case TemplateId::DescriptionSimple: return "description_simple.txt";
    case TemplateId::CaptionFewshot: return "caption_fewshot.txt";
    case TemplateId::CaptionPlain: return "caption_plain.txt";
    case TemplateId::Judgement: return "judgement.txt";
    case TemplateId::Summary: return "summary.txt";
  }
  return "";
}

std::string_view template_skeleton(TemplateId id) {
  switch (id) {
    case TemplateId::QualityAssessment: return kQualityAssessment;
    case TemplateId::DescriptionLarge: return kDescriptionLarge;
    case TemplateId::DescriptionSimple: return kDescriptionSimple;
    case TemplateId::CaptionFewshot: return kCaptionFewshot;
    case TemplateId::CaptionPlain: return kCaptionPlain;
    case TemplateId::Judgement: return kJudgement;
    case TemplateId::Summary: return kSummary;
  }
  return {};
}

bool template_requires_image(TemplateId id) {
  return id == TemplateId::QualityAssessment || id == TemplateId::DescriptionLarge ||
         id == TemplateId::DescriptionSimple;
}

std::string_view to_string(TrackKind kind) {
  return kind == TrackKind::Long ? "long" : "short";
}

Track Track::long_track(int max_len) {
  if (max_len <= 0) throw Error(ErrorCode::Config, "max_len_words must be > 0");
  return Track{TrackKind::Long, max_len};
}

Track Track::short_track(int max_len) {
  if (max_len <= 0) throw Error(ErrorCode::Config, "max_len_words must be > 0");
  return Track{TrackKind::Short, max_len};
}

Track Track::parse(std::string_view name, int long_len, int short_len) {
  const auto lower = to_lower_ascii(name);
  if (lower == "long") return long_track(long_len);
  if (lower == "short") return short_track(short_len);
  throw Error(ErrorCode::Config, "unknown track '" + std::string(name) + "' (expected long|short)");
}

std::string concat_and_truncate_paragraphs(const std::vector<std::string>& paragraphs,
                                           std::size_t limit_tokens) {
  if (limit_tokens == 0) throw Error(ErrorCode::Config, "token limit must be > 0");
  std::string joined = join_lines(paragraphs);
  auto tokens = split_whitespace(joined);
  if (tokens.size() <= limit_tokens) return joined;
  tokens.resize(limit_tokens);
  return join(tokens, " ");
}

RenderedPrompt render_quality_assessment(const FigureRecord& record, std::size_t limit_tokens) {
  if (!record.image_ref) {
    throw Error(ErrorCode::ImageRequired,
                "quality assessment needs the figure image (" + record.figure_id + ")");
  }
  Fill fill{{std::string(kParagraphs), concat_and_truncate_paragraphs(record.paragraphs, limit_tokens)},
            {std::string(kCaption), record.caption}};
  RenderedPrompt p{substitute(strip_figure_line(kQualityAssessment), fill), record.image_ref,
                   TemplateId::QualityAssessment, fill};
  p.placeholder_fill[std::string(kFigure)] = *record.image_ref;
  return p;
}

RenderedPrompt render_description_large(std::string_view figure_type, std::string_view subject) {
  Fill fill{{std::string(kFigureType), std::string(figure_type)},
            {std::string(kSubject), std::string(subject)}};
  return {substitute(strip_figure_line(kDescriptionLarge), fill), std::nullopt,
          TemplateId::DescriptionLarge, fill};
}

RenderedPrompt render_description_simple() {
  return {std::string(strip_figure_line(kDescriptionSimple)), std::nullopt,
          TemplateId::DescriptionSimple, {}};
}

RenderedPrompt render_caption_prompt(const FigureRecord& record, std::string_view description,
                                     const std::optional<FewShotSet>& fewshot,
                                     std::size_t limit_tokens) {
  Fill fill{{std::string(kFigureType), record.figure_type},
            {std::string(kSubject), record.subject},
            {std::string(kParagraphs), concat_and_truncate_paragraphs(record.paragraphs, limit_tokens)},
            {std::string(kDescription), std::string(description)},
            {std::string(kMentions), join_lines(record.mentions)},
            {std::string(kOcr), record.ocr_text}};
  const TemplateId id = fewshot ? TemplateId::CaptionFewshot : TemplateId::CaptionPlain;
  if (fewshot) fill[std::string(kFewShot)] = bullet_lines(*fewshot);
  return {substitute(template_skeleton(id), fill), std::nullopt, id, fill};
}

RenderedPrompt render_summary_prompt(const FigureRecord& record, std::size_t limit_tokens) {
  Fill fill{{std::string(kParagraphs), concat_and_truncate_paragraphs(record.paragraphs, limit_tokens)},
            {std::string(kOcr), record.ocr_text}};
  return {substitute(kSummary, fill), std::nullopt, TemplateId::Summary, fill};
}

RenderedPrompt render_judgement(const CandidateSet& candidates, std::string_view description,
                                const std::vector<std::string>& paragraphs,
                                const std::vector<std::string>& mentions, const Track& track,
                                std::size_t limit_tokens) {
  if (auto gap = candidates.first_gap()) {
    throw Error(ErrorCode::CandidatesIncomplete,
                "candidate set for " + candidates.figure_id + " lacks caption " +
                    std::string(to_string(*gap)));
  }
  if (track.max_len_words <= 0) throw Error(ErrorCode::Config, "max_len_words must be > 0");
  Fill fill{{std::string(kDescription), std::string(description)},
            {std::string(kParagraphs), concat_and_truncate_paragraphs(paragraphs, limit_tokens)},
            {std::string(kMentions), join_lines(mentions)},
            {std::string(kMaxLen), std::to_string(track.max_len_words)}};
  for (Label label : kAllLabels) {
    fill[std::string(slot_placeholder(label))] = candidates.find(label)->text;
  }
  return {substitute(kJudgement, fill), std::nullopt, TemplateId::Judgement, fill};
}

const std::vector<std::string>& all_placeholders() {
  static const std::vector<std::string> names{
      std::string(kFigure),    std::string(kParagraphs), std::string(kCaption),
      std::string(kFigureType), std::string(kSubject),   std::string(kFewShot),
      std::string(kMentions),  std::string(kOcr),        std::string(kDescription),
      std::string(kMaxLen),    std::string(kCaptionA),   std::string(kCaptionB),
      std::string(kCaptionC),  std::string(kCaptionD)};
  return names;
}

}  // namespace mlbcap
