#include "mlbcap/backends.hpp"
#include "mlbcap/error.hpp"

namespace mlbcap {
namespace {

// End (one past the closing brace) of the balanced object starting at
// `open`, or npos. Braces inside string literals are ignored.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

JsonExtraction extract_json_object(std::string_view text) {
  bool any_balanced = false;
  for (std::size_t open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    const std::size_t end = balanced_end(text, open);
    if (end == std::string_view::npos) continue;
    any_balanced = true;
    auto parsed = nlohmann::json::parse(text.substr(open, end - open), nullptr,
                                        /*allow_exceptions=*/false);
    if (!parsed.is_discarded() && parsed.is_object()) return {std::move(parsed), open, end};
  }
  if (any_balanced) throw Error(ErrorCode::ParseInvalid, "reply contains no valid JSON object");
  throw Error(ErrorCode::ParseNoObject, "reply contains no JSON object");
}

}  // namespace mlbcap
