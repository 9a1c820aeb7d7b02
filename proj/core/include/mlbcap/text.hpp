#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mlbcap {

/// Number of maximal runs of non-whitespace characters.
std::size_t word_count(std::string_view text);

/// Counts '.', '?' and '!' that are followed by whitespace or end of text.
/// Text with words but no terminator counts as one sentence.
std::size_t sentence_count(std::string_view text);

/// Whitespace tokens in order.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string_view trim_right(std::string_view text);
std::string_view trim(std::string_view text);

/// ASCII lowercase; other bytes pass through untouched.
std::string to_lower_ascii(std::string_view text);

}  // namespace mlbcap
