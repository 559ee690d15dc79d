#pragma once

// Brute-force BM25 used only by tests: scores every document directly from its
// analyzed term list, without any inverted index.
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace diavgeia::oracle {

struct OracleDoc {
    std::string ada;
    std::vector<std::string> terms;
};

struct OracleHit {
    std::string ada;
    double score;
};

inline std::vector<OracleHit> brute_force_bm25(const std::vector<OracleDoc>& docs, const std::vector<std::string>& query,
                                               std::size_t k, double k1 = 1.2, double b = 0.75)
{
    const double n = static_cast<double>(docs.size());
    double total = 0;
    for (const auto& d : docs) total += static_cast<double>(d.terms.size());
    const double avgdl = total / n;

    std::vector<std::string> unique_query;
    for (const auto& t : query) {
        if (std::find(unique_query.begin(), unique_query.end(), t) == unique_query.end()) unique_query.push_back(t);
    }
    std::vector<OracleHit> hits;
    for (const auto& d : docs) {
        double score = 0;
        bool matched = false;
        for (const auto& t : unique_query) {
            const double tf = static_cast<double>(std::count(d.terms.begin(), d.terms.end(), t));
            if (tf == 0) continue;
            double df = 0;
            for (const auto& other : docs) {
                df += std::find(other.terms.begin(), other.terms.end(), t) != other.terms.end();
            }
            const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            const double dl = static_cast<double>(d.terms.size());
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
            matched = true;
        }
        if (matched) hits.push_back({d.ada, score});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
        return x.score != y.score ? x.score > y.score : x.ada < y.ada;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace diavgeia::oracle
