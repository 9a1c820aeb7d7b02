#include "mlbcap/candidates.hpp"

namespace mlbcap {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::A: return "A";
    case Label::B: return "B";
    case Label::C: return "C";
    case Label::D: return "D";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "A") return Label::A;
  if (text == "B") return Label::B;
  if (text == "C") return Label::C;
  if (text == "D") return Label::D;
  return std::nullopt;
}

std::string_view role_name(Label label) {
  switch (label) {
    case Label::A: return "summarizer";
    case Label::B: return "finetuned_1";
    case Label::C: return "finetuned_2";
    case Label::D: return "commercial";
  }
  return "?";
}

const CandidateCaption* CandidateSet::find(Label label) const {
  for (const auto& c : candidates) {
    if (c.label == label) return &c;
  }
  return nullptr;
}

std::optional<Label> CandidateSet::first_gap() const {
  for (Label label : kAllLabels) {
    int seen = 0;
    for (const auto& c : candidates) {
      if (c.label == label && !c.text.empty()) ++seen;
    }
    if (seen != 1) return label;
  }
  return std::nullopt;
}

bool CandidateSet::complete() const {
  return candidates.size() == 4 && !first_gap();
}

}  // namespace mlbcap
