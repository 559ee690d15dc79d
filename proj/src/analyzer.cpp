#include "diavgeia/analyzer.hpp"

#include <algorithm>
#include <unordered_set>

#include "diavgeia/embedded/greek_stopwords.hpp"
#include "diavgeia/embedded/greek_suffixes.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace {

std::vector<std::string_view> table_lines(std::string_view text)
{
    std::vector<std::string_view> out;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        out.push_back(line);
    }
    return out;
}

const std::unordered_set<std::string_view>& stopwords()
{
    static const auto set = [] {
        const auto lines = table_lines(embedded::greek_stopwords);
        return std::unordered_set<std::string_view>(lines.begin(), lines.end());
    }();
    return set;
}

const std::vector<std::u32string>& suffixes()
{
    static const auto list = [] {
        std::vector<std::u32string> out;
        for (auto line : table_lines(embedded::greek_suffixes)) out.push_back(utf8::decode(line));
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
        return out;
    }();
    return list;
}

constexpr std::size_t kMinStem = 3;

bool is_combining_mark(char32_t cp) noexcept { return cp >= 0x0300 && cp <= 0x036F; }

bool is_token_char(char32_t cp) noexcept
{
    if (cp < 0x80) return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
    if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
    if (is_combining_mark(cp)) return true;
    if (cp >= 0x0370 && cp <= 0x03FF) return cp != 0x037E && cp != 0x0387 && cp != 0x0374 && cp != 0x0375;
    if (cp >= 0x1F00 && cp <= 0x1FFF) return true;
    return cp >= 0x0400 && cp <= 0x04FF;
}

bool has_digit(std::u32string_view word) noexcept
{
    return std::any_of(word.begin(), word.end(), [](char32_t c) { return c >= U'0' && c <= U'9'; });
}

}  // namespace

char32_t fold_greek(char32_t cp) noexcept
{
    if (cp >= U'A' && cp <= U'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x0391 && cp <= 0x03A9) cp += 32;  // capitals, incl. Σ -> σ
    switch (cp) {
    case 0x0386: case 0x03AC: return 0x03B1;              // ά -> α
    case 0x0388: case 0x03AD: return 0x03B5;              // έ -> ε
    case 0x0389: case 0x03AE: return 0x03B7;              // ή -> η
    case 0x038A: case 0x03AF: case 0x0390:
    case 0x03AA: case 0x03CA: return 0x03B9;              // ί ΐ ϊ -> ι
    case 0x038C: case 0x03CC: return 0x03BF;              // ό -> ο
    case 0x038E: case 0x03CD: case 0x03B0:
    case 0x03AB: case 0x03CB: return 0x03C5;              // ύ ΰ ϋ -> υ
    case 0x038F: case 0x03CE: return 0x03C9;              // ώ -> ω
    case 0x03C2: return 0x03C3;                           // ς -> σ
    default: return cp;
    }
}

bool is_greek_stopword(std::string_view folded) noexcept { return stopwords().contains(folded); }

std::size_t greek_stopword_count() noexcept { return stopwords().size(); }
std::size_t greek_suffix_count() noexcept { return suffixes().size(); }

std::u32string stem_greek(std::u32string word)
{
    if (has_digit(word)) return word;
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& suffix : suffixes()) {
            if (word.size() >= suffix.size() + kMinStem &&
                std::u32string_view(word).substr(word.size() - suffix.size()) == suffix) {
                word.resize(word.size() - suffix.size());
                changed = true;
                break;
            }
        }
    }
    return word;
}

std::vector<std::string> analyze_greek(std::string_view text, const AnalyzerOptions& options)
{
    std::vector<std::string> out;
    std::u32string word;
    auto flush = [&] {
        if (word.empty()) return;
        std::string folded = utf8::encode(word);
        if (options.remove_stopwords && is_greek_stopword(folded)) {
            word.clear();
            return;
        }
        if (options.stem) {
            auto stem = utf8::encode(stem_greek(std::move(word)));
            // A stem that collides with a stopword would vanish on re-analysis.
            if (!(options.remove_stopwords && is_greek_stopword(stem))) out.push_back(std::move(stem));
        } else {
            out.push_back(std::move(folded));
        }
        word.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        if (!is_token_char(cp)) {
            flush();
            continue;
        }
        if (is_combining_mark(cp)) continue;
        word.push_back(fold_greek(cp));
    }
    flush();
    return out;
}

}  // namespace diavgeia
