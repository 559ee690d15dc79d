#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diavgeia/corpus.hpp"
#include "diavgeia/errors.hpp"

namespace diavgeia {

class EmptyIndex : public Error {
  public:
    using Error::Error;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct SearchHit {
    std::string ada;
    double score = 0.0;
    std::string excerpt;
};

struct IndexStats {
    std::size_t n_docs = 0;
    double avg_doc_len = 0.0;
    std::unordered_map<std::string, std::size_t> df;
};

/// One indexed decision. `content` is header + "\n\n" + body.
struct IndexedDocument {
    std::string ada;
    std::string header;
    std::string body;
    std::uint32_t length = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> term_freqs;  // (term id, tf)

    std::string content() const { return header + "\n\n" + body; }
};

double bm25_idf(std::size_t n_docs, std::size_t df) noexcept;

/// In-memory inverted index ranked with BM25. Writes are single-threaded;
/// const member functions may run concurrently once writes have stopped.
class SearchIndex {
  public:
    explicit SearchIndex(Bm25Params params = {}, std::size_t excerpt_chars = 2000);

    void index_document(const StoredDocument& doc);

    /// Adds or replaces the document stored under `ada`.
    void upsert(std::string ada, std::string header, std::string body);
    bool remove(std::string_view ada);

    /// At most k hits, descending score, ties by ascending ADA. Throws
    /// EmptyIndex when nothing is indexed.
    std::vector<SearchHit> search(std::string_view query, std::size_t k) const;
    std::vector<SearchHit> search_terms(const std::vector<std::string>& terms, std::size_t k) const;

    const IndexedDocument* find(std::string_view ada) const;
    std::size_t size() const noexcept { return live_docs_; }
    std::size_t document_frequency(std::string_view term) const;
    double average_length() const noexcept;
    IndexStats stats() const;
    const Bm25Params& params() const noexcept { return params_; }
    std::size_t excerpt_chars() const noexcept { return excerpt_chars_; }

    /// Snapshot v1, all integers little-endian, strings u32-length-prefixed:
    ///   "DVIX" u32 version=1 f64 k1 f64 b u32 excerpt_chars u64 n_docs
    ///   n_docs x { str ada, str header, str body, u32 n_terms,
    ///              n_terms x { str term, u32 tf } }
    void save(const std::filesystem::path& path) const;
    static SearchIndex load(const std::filesystem::path& path);

  private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    std::uint32_t intern(const std::string& term);
    void insert(std::string ada, std::string header, std::string body, const std::vector<std::string>& terms);

    Bm25Params params_;
    std::size_t excerpt_chars_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<IndexedDocument> docs_;
    std::vector<bool> live_;
    std::unordered_map<std::string, std::uint32_t> by_ada_;
    std::size_t live_docs_ = 0;
    std::uint64_t total_length_ = 0;
};

}  // namespace diavgeia
