#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diavgeia/corpus.hpp"

namespace diavgeia {

/// Maps text to a token-id sequence. Implementations must be deterministic
/// and safe to call concurrently.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::uint32_t> encode(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return encode(text).size(); }
};

/// Splits on whitespace; every punctuation or symbol character is a token of
/// its own, every maximal run of letters and digits is one token.
class ReferenceTokenizer final : public Tokenizer {
  public:
    std::vector<std::uint32_t> encode(std::string_view text) const override;
    std::size_t count(std::string_view text) const override;
};

inline std::size_t count_tokens(std::string_view text, const Tokenizer& tokenizer)
{
    return tokenizer.count(text);
}

/// Number of non-blank segments delimited by . ! ? ; (and the Greek question
/// mark U+037E) or end of text.
std::size_t estimate_sentences(std::string_view text) noexcept;

struct DocStats {
    std::string ada;
    std::string organization_id;
    std::int64_t tokens = 0;
    std::int64_t characters = 0;
    std::int64_t sentences = 0;
};

DocStats compute_doc_stats(const StoredDocument& doc, const Tokenizer& tokenizer);

struct CorpusStats {
    std::int64_t n_docs = 0;
    std::int64_t n_files = 0;        // metadata files seen, including unreadable ones
    std::int64_t distinct_adas = 0;
    std::int64_t read_errors = 0;
    std::int64_t total_tokens = 0;
    double mean_tokens = 0.0;
    std::int64_t median_tokens = 0;  // lower median
    double std_tokens = 0.0;         // population standard deviation
    std::int64_t max_tokens = 0;
    std::int64_t total_chars = 0;
    double mean_chars = 0.0;
    std::int64_t total_sentences = 0;
    double mean_sentences = 0.0;
    std::map<std::string, std::int64_t> org_histogram;

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

/// Order-sensitive only through floating-point summation, which always runs
/// over `docs` in the given order.
CorpusStats aggregate_stats(std::span<const DocStats> docs);

/// Reads every stored document with `workers` threads; per-file failures are
/// counted in read_errors. The result does not depend on `workers`.
CorpusStats compute_corpus_stats(const CorpusLayout& layout, std::size_t workers, const Tokenizer& tokenizer);

/// Descending by count, ties by ascending organization id.
std::vector<std::pair<std::string, std::int64_t>> top_organizations(const CorpusStats& stats, std::size_t n);

nlohmann::json to_json(const CorpusStats& stats);
std::string render_table(const CorpusStats& stats);

}  // namespace diavgeia
