#include "diavgeia/textstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "diavgeia/errors.hpp"
#include "diavgeia/hashing.hpp"
#include "diavgeia/parallel.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace {

bool is_word_char(char32_t cp) noexcept
{
    if (cp < 0x80) {
        return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') || cp == U'_';
    }
    if (utf8::is_space(cp)) return false;
    if (cp >= 0xA1 && cp <= 0xBF) return false;           // Latin-1 punctuation
    if (cp == 0xD7 || cp == 0xF7) return false;           // × ÷
    if (cp == 0x037E || cp == 0x0387) return false;       // Greek question mark, ano teleia
    if (cp >= 0x2010 && cp <= 0x206F) return false;       // general punctuation
    if (cp >= 0x20A0 && cp <= 0x20CF) return false;       // currency symbols
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    return cp != utf8::kReplacement;
}

template <typename Emit>
void split_tokens(std::string_view text, Emit&& emit)
{
    std::size_t pos = 0;
    std::size_t word_begin = std::string_view::npos;
    while (pos < text.size()) {
        const std::size_t at = pos;
        const char32_t cp = utf8::next(text, pos);
        if (is_word_char(cp)) {
            if (word_begin == std::string_view::npos) word_begin = at;
            continue;
        }
        if (word_begin != std::string_view::npos) {
            emit(text.substr(word_begin, at - word_begin));
            word_begin = std::string_view::npos;
        }
        if (!utf8::is_space(cp)) emit(text.substr(at, pos - at));
    }
    if (word_begin != std::string_view::npos) emit(text.substr(word_begin));
}

}  // namespace

std::vector<std::uint32_t> ReferenceTokenizer::encode(std::string_view text) const
{
    std::vector<std::uint32_t> ids;
    split_tokens(text, [&](std::string_view tok) { ids.push_back(static_cast<std::uint32_t>(fnv1a64(tok))); });
    return ids;
}

std::size_t ReferenceTokenizer::count(std::string_view text) const
{
    std::size_t n = 0;
    split_tokens(text, [&](std::string_view) { ++n; });
    return n;
}

std::size_t estimate_sentences(std::string_view text) noexcept
{
    std::size_t count = 0;
    bool has_content = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        if (cp == U'.' || cp == U'!' || cp == U'?' || cp == U';' || cp == 0x037E) {
            if (has_content) ++count;
            has_content = false;
        } else if (!utf8::is_space(cp)) {
            has_content = true;
        }
    }
    if (has_content) ++count;
    return count;
}

DocStats compute_doc_stats(const StoredDocument& doc, const Tokenizer& tokenizer)
{
    DocStats s;
    s.ada = doc.record.ada;
    s.organization_id = doc.record.organization_id;
    s.tokens = static_cast<std::int64_t>(tokenizer.count(doc.body_markdown));
    s.characters = static_cast<std::int64_t>(utf8::length(doc.body_markdown));
    s.sentences = static_cast<std::int64_t>(estimate_sentences(doc.body_markdown));
    return s;
}

CorpusStats aggregate_stats(std::span<const DocStats> docs)
{
    CorpusStats out;
    out.n_docs = static_cast<std::int64_t>(docs.size());
    out.n_files = out.n_docs;
    std::set<std::string_view> adas;
    std::vector<std::int64_t> tokens;
    tokens.reserve(docs.size());
    for (const auto& d : docs) {
        out.total_tokens += d.tokens;
        out.total_chars += d.characters;
        out.total_sentences += d.sentences;
        out.max_tokens = std::max(out.max_tokens, d.tokens);
        ++out.org_histogram[d.organization_id];
        adas.insert(d.ada);
        tokens.push_back(d.tokens);
    }
    out.distinct_adas = static_cast<std::int64_t>(adas.size());
    if (docs.empty()) return out;

    const auto n = static_cast<double>(docs.size());
    out.mean_tokens = static_cast<double>(out.total_tokens) / n;
    out.mean_chars = static_cast<double>(out.total_chars) / n;
    out.mean_sentences = static_cast<double>(out.total_sentences) / n;

    double ss = 0.0;
    for (auto t : tokens) {
        const double d = static_cast<double>(t) - out.mean_tokens;
        ss += d * d;
    }
    out.std_tokens = std::sqrt(ss / n);

    const auto mid = tokens.begin() + static_cast<std::ptrdiff_t>((tokens.size() - 1) / 2);
    std::nth_element(tokens.begin(), mid, tokens.end());
    out.median_tokens = *mid;
    return out;
}

CorpusStats compute_corpus_stats(const CorpusLayout& layout, std::size_t workers, const Tokenizer& tokenizer)
{
    if (workers == 0) throw InvalidArgument("workers must be >= 1");
    const auto adas = layout.list_adas();
    std::vector<DocStats> per_doc(adas.size());
    std::vector<char> ok(adas.size(), 0);
    parallel_for(adas.size(), workers, [&](std::size_t i) {
        try {
            per_doc[i] = compute_doc_stats(load_document(layout, adas[i]), tokenizer);
            ok[i] = 1;
        } catch (const Error&) {
            ok[i] = 0;
        }
    });
    std::vector<DocStats> good;
    good.reserve(per_doc.size());
    for (std::size_t i = 0; i < per_doc.size(); ++i) {
        if (ok[i]) good.push_back(std::move(per_doc[i]));
    }
    auto stats = aggregate_stats(good);
    stats.n_files = static_cast<std::int64_t>(adas.size());
    stats.read_errors = stats.n_files - stats.n_docs;
    return stats;
}

std::vector<std::pair<std::string, std::int64_t>> top_organizations(const CorpusStats& stats, std::size_t n)
{
    std::vector<std::pair<std::string, std::int64_t>> rows(stats.org_histogram.begin(), stats.org_histogram.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (rows.size() > n) rows.resize(n);
    return rows;
}

nlohmann::json to_json(const CorpusStats& s)
{
    return {
        {"n_docs", s.n_docs},
        {"n_files", s.n_files},
        {"distinct_adas", s.distinct_adas},
        {"read_errors", s.read_errors},
        {"total_tokens", s.total_tokens},
        {"mean_tokens", s.mean_tokens},
        {"median_tokens", s.median_tokens},
        {"std_tokens", s.std_tokens},
        {"max_tokens", s.max_tokens},
        {"total_chars", s.total_chars},
        {"mean_chars", s.mean_chars},
        {"total_sentences", s.total_sentences},
        {"mean_sentences", s.mean_sentences},
        {"org_histogram", s.org_histogram},
    };
}

std::string render_table(const CorpusStats& s)
{
    std::ostringstream out;
    char buf[128];
    auto row = [&](const char* label, const std::string& value) {
        std::snprintf(buf, sizeof buf, "%-42s %20s\n", label, value.c_str());
        out << buf;
    };
    auto fixed2 = [](double v) {
        char b[64];
        std::snprintf(b, sizeof b, "%.2f", v);
        return std::string(b);
    };
    row("Number of Documents", std::to_string(s.n_docs));
    row("Total Tokens", std::to_string(s.total_tokens));
    row("Unique Documents Read", std::to_string(s.distinct_adas));
    row("Average Tokens per Document", fixed2(s.mean_tokens));
    row("Median Tokens per Document", std::to_string(s.median_tokens));
    row("Standard Deviation (Tokens per Document)", fixed2(s.std_tokens));
    row("Maximum Tokens in a Document", std::to_string(s.max_tokens));
    row("Total Characters", std::to_string(s.total_chars));
    row("Average Characters per Document", fixed2(s.mean_chars));
    row("Total Sentences", std::to_string(s.total_sentences));
    row("Average Sentences per Document", fixed2(s.mean_sentences));
    if (s.read_errors > 0) row("Unreadable Files", std::to_string(s.read_errors));
    return out.str();
}

}  // namespace diavgeia
