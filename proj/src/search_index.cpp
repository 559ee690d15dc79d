#include "diavgeia/search_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "diavgeia/analyzer.hpp"
#include "diavgeia/binary_io.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace {
constexpr std::string_view kMagic = "DVIX";
constexpr std::uint32_t kVersion = 1;
}  // namespace

double bm25_idf(std::size_t n_docs, std::size_t df) noexcept
{
    const auto n = static_cast<double>(n_docs);
    const auto d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

SearchIndex::SearchIndex(Bm25Params params, std::size_t excerpt_chars)
    : params_(params), excerpt_chars_(excerpt_chars)
{}

std::uint32_t SearchIndex::intern(const std::string& term)
{
    auto [it, inserted] = term_ids_.try_emplace(term, static_cast<std::uint32_t>(terms_.size()));
    if (inserted) {
        terms_.push_back(term);
        postings_.emplace_back();
    }
    return it->second;
}

void SearchIndex::index_document(const StoredDocument& doc)
{
    upsert(doc.record.ada, render_metadata_header(doc.record), doc.body_markdown);
}

void SearchIndex::upsert(std::string ada, std::string header, std::string body)
{
    const auto terms = analyze_greek(header + "\n\n" + body);
    insert(std::move(ada), std::move(header), std::move(body), terms);
}

void SearchIndex::insert(std::string ada, std::string header, std::string body, const std::vector<std::string>& terms)
{
    remove(ada);
    std::map<std::uint32_t, std::uint32_t> counts;
    for (const auto& t : terms) ++counts[intern(t)];

    const auto doc_id = static_cast<std::uint32_t>(docs_.size());
    IndexedDocument doc{std::move(ada), std::move(header), std::move(body),
                        static_cast<std::uint32_t>(terms.size()), {counts.begin(), counts.end()}};
    // Doc ids only grow, so appending keeps each posting list sorted.
    for (const auto& [term, tf] : doc.term_freqs) postings_[term].push_back({doc_id, tf});
    total_length_ += doc.length;
    by_ada_.emplace(doc.ada, doc_id);
    docs_.push_back(std::move(doc));
    live_.push_back(true);
    ++live_docs_;
}

bool SearchIndex::remove(std::string_view ada)
{
    const auto it = by_ada_.find(std::string(ada));
    if (it == by_ada_.end()) return false;
    const auto doc_id = it->second;
    auto& doc = docs_[doc_id];
    for (const auto& [term, tf] : doc.term_freqs) {
        auto& list = postings_[term];
        const auto pos = std::lower_bound(list.begin(), list.end(), doc_id,
                                          [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (pos != list.end() && pos->doc == doc_id) list.erase(pos);
    }
    total_length_ -= doc.length;
    doc = IndexedDocument{};
    live_[doc_id] = false;
    --live_docs_;
    by_ada_.erase(it);
    return true;
}

const IndexedDocument* SearchIndex::find(std::string_view ada) const
{
    const auto it = by_ada_.find(std::string(ada));
    return it == by_ada_.end() ? nullptr : &docs_[it->second];
}

std::size_t SearchIndex::document_frequency(std::string_view term) const
{
    const auto it = term_ids_.find(std::string(term));
    return it == term_ids_.end() ? 0 : postings_[it->second].size();
}

double SearchIndex::average_length() const noexcept
{
    return live_docs_ == 0 ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(live_docs_);
}

IndexStats SearchIndex::stats() const
{
    IndexStats s;
    s.n_docs = live_docs_;
    s.avg_doc_len = average_length();
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        if (!postings_[t].empty()) s.df.emplace(terms_[t], postings_[t].size());
    }
    return s;
}

std::vector<SearchHit> SearchIndex::search(std::string_view query, std::size_t k) const
{
    return search_terms(analyze_greek(query), k);
}

std::vector<SearchHit> SearchIndex::search_terms(const std::vector<std::string>& terms, std::size_t k) const
{
    if (live_docs_ == 0) throw EmptyIndex("search on an empty index");
    if (k == 0) throw InvalidArgument("k must be >= 1");

    // Each distinct query term contributes once.
    std::vector<std::uint32_t> query_ids;
    for (const auto& t : terms) {
        const auto it = term_ids_.find(t);
        if (it == term_ids_.end() || postings_[it->second].empty()) continue;
        if (std::find(query_ids.begin(), query_ids.end(), it->second) == query_ids.end()) {
            query_ids.push_back(it->second);
        }
    }

    const double avgdl = average_length();
    const double k1 = params_.k1;
    const double b = params_.b;
    std::unordered_map<std::uint32_t, double> scores;
    for (const auto term : query_ids) {
        const auto& list = postings_[term];
        const double idf = bm25_idf(live_docs_, list.size());
        for (const auto& p : list) {
            const double tf = p.tf;
            const double len_norm = avgdl > 0.0 ? static_cast<double>(docs_[p.doc].length) / avgdl : 0.0;
            scores[p.doc] += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len_norm));
        }
    }

    std::vector<std::pair<double, std::uint32_t>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [doc, score] : scores) ranked.emplace_back(score, doc);

    auto better = [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return docs_[a.second].ada < docs_[b.second].ada;
    };
    const std::size_t take = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(), better);

    std::vector<SearchHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& doc = docs_[ranked[i].second];
        hits.push_back({doc.ada, ranked[i].first, std::string(utf8::prefix(doc.content(), excerpt_chars_))});
    }
    return hits;
}

void SearchIndex::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index snapshot " + path.string());
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    binio::write_le(out, kVersion);
    binio::write_f64(out, params_.k1);
    binio::write_f64(out, params_.b);
    binio::write_le(out, static_cast<std::uint32_t>(excerpt_chars_));
    binio::write_le(out, static_cast<std::uint64_t>(live_docs_));

    // Snapshot order is by ADA so identical contents give identical bytes.
    std::vector<std::uint32_t> order;
    for (std::uint32_t i = 0; i < docs_.size(); ++i) {
        if (live_[i]) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [this](auto a, auto b) { return docs_[a].ada < docs_[b].ada; });
    for (const auto id : order) {
        const auto& doc = docs_[id];
        binio::write_str(out, doc.ada);
        binio::write_str(out, doc.header);
        binio::write_str(out, doc.body);
        std::vector<std::pair<std::string_view, std::uint32_t>> tf;
        for (const auto& [term, count] : doc.term_freqs) tf.emplace_back(terms_[term], count);
        std::sort(tf.begin(), tf.end());
        binio::write_le(out, static_cast<std::uint32_t>(tf.size()));
        for (const auto& [term, count] : tf) {
            binio::write_str(out, term);
            binio::write_le(out, count);
        }
    }
    if (!out) throw IoError("short write to " + path.string());
}

SearchIndex SearchIndex::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open index snapshot " + path.string());
    binio::expect_magic(in, kMagic);
    const auto version = binio::read_le<std::uint32_t>(in);
    if (version != kVersion) throw CorruptRecord("unsupported index snapshot version " + std::to_string(version));
    Bm25Params params;
    params.k1 = binio::read_f64(in);
    params.b = binio::read_f64(in);
    const auto excerpt = binio::read_le<std::uint32_t>(in);
    SearchIndex index(params, excerpt);
    const auto n = binio::read_le<std::uint64_t>(in);
    std::vector<std::string> terms;
    for (std::uint64_t i = 0; i < n; ++i) {
        auto ada = binio::read_str(in);
        auto header = binio::read_str(in);
        auto body = binio::read_str(in);
        const auto n_terms = binio::read_le<std::uint32_t>(in);
        terms.clear();
        for (std::uint32_t t = 0; t < n_terms; ++t) {
            auto term = binio::read_str(in);
            const auto tf = binio::read_le<std::uint32_t>(in);
            for (std::uint32_t r = 0; r < tf; ++r) terms.push_back(term);
        }
        index.insert(std::move(ada), std::move(header), std::move(body), terms);
    }
    return index;
}

}  // namespace diavgeia
