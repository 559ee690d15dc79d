#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace diavgeia {

struct AnalyzerOptions {
    bool remove_stopwords = true;
    bool stem = true;
};

/// Greek analyzer: Unicode word segmentation, lower-casing, tonos/dialytika
/// folding, final sigma to σ, stopword removal, light suffix stripping.
/// Idempotent: analyzing the space-joined output reproduces it.
std::vector<std::string> analyze_greek(std::string_view text, const AnalyzerOptions& options = {});

/// Lower-cases and folds accents of a single code point.
char32_t fold_greek(char32_t cp) noexcept;

std::u32string stem_greek(std::u32string word);

bool is_greek_stopword(std::string_view folded) noexcept;

/// Table sizes, for diagnostics.
std::size_t greek_stopword_count() noexcept;
std::size_t greek_suffix_count() noexcept;

}  // namespace diavgeia
