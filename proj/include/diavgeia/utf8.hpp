#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace diavgeia::utf8 {

/// Returned by decode() in place of a malformed sequence.
inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes the code point starting at `pos` and advances `pos` past it.
/// Malformed input yields kReplacement and advances one byte.
char32_t next(std::string_view text, std::size_t& pos) noexcept;

std::u32string decode(std::string_view text);
void append(std::string& out, char32_t cp);
std::string encode(std::u32string_view cps);

bool is_valid(std::string_view text) noexcept;

/// Number of code points; malformed bytes count as one each.
std::size_t length(std::string_view text) noexcept;

/// Longest prefix holding at most `max_chars` code points.
std::string_view prefix(std::string_view text, std::size_t max_chars) noexcept;

bool is_space(char32_t cp) noexcept;

}  // namespace diavgeia::utf8
