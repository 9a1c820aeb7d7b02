#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mlbcap {

/// Candidate slot in the judgement prompt. The slot fixes the producing role:
/// A summarizer, B first fine-tuned model, C second fine-tuned model,
/// D large commercial model.
enum class Label { A, B, C, D };

inline constexpr std::array<Label, 4> kAllLabels{Label::A, Label::B, Label::C, Label::D};

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view text);

/// Role name for a label, e.g. "summarizer".
std::string_view role_name(Label label);

struct CandidateCaption {
  Label label;
  std::string text;
  std::string backend_id;
};

struct CandidateSet {
  std::string figure_id;
  std::vector<CandidateCaption> candidates;

  /// All four labels present exactly once with nonempty text.
  bool complete() const;
  const CandidateCaption* find(Label label) const;
  /// First label that is missing or duplicated, if any.
  std::optional<Label> first_gap() const;
};

}  // namespace mlbcap
