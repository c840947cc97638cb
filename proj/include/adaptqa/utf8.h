// SPDX-License-Identifier: Apache-2.0
//
// Minimal UTF-8 and character-class helpers. Offsets elsewhere in the
// project count Unicode code points, matching SQuAD's answer_start.

#pragma once

#include <string>
#include <string_view>

namespace adaptqa::utf8 {

/// Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
std::string encode(char32_t cp);
std::size_t length(std::string_view text);

bool is_whitespace(char32_t cp);
/// ASCII punctuation and symbols plus the common Unicode punctuation blocks
/// (general punctuation, CJK punctuation, full-width forms, Arabic and
/// Devanagari sentence marks).
bool is_punctuation(char32_t cp);
/// CJK unified ideographs and compatibility ideographs.
bool is_cjk(char32_t cp);
/// Simple case folding for Latin, Greek and Cyrillic; other scripts pass through.
char32_t to_lower(char32_t cp);

}  // namespace adaptqa::utf8
