#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "diavgeia/corpus.hpp"
#include "diavgeia/embedding.hpp"
#include "diavgeia/errors.hpp"
#include "diavgeia/llm.hpp"
#include "diavgeia/search_index.hpp"

namespace diavgeia {

class InvalidSample : public Error {
  public:
    using Error::Error;
};
class MalformedResult : public Error {
  public:
    using Error::Error;
};

// ---- QA pairs --------------------------------------------------------------

struct QAPair {
    std::string question;
    std::string ground_truth;
    std::string ada;

    bool operator==(const QAPair&) const = default;
};

nlohmann::json to_json(const QAPair& pair);
/// Throws CorruptRecord on missing fields, empty text or an invalid ADA.
QAPair qa_pair_from_json(const nlohmann::json& j);
std::vector<QAPair> read_qa_pairs(const std::filesystem::path& path);
void write_qa_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs);

struct QaSkip {
    std::string ada;
    std::string reason;
};

struct QaGenerationReport {
    std::vector<QAPair> pairs;  // in sample order
    std::vector<QaSkip> skipped;
};

/// Seeded sample without replacement, one generation request per document.
/// Unparseable replies are retried once, then skipped.
QaGenerationReport generate_qa_pairs(const CorpusLayout& layout, std::size_t sample_size, const ChatModel& generator,
                                     std::uint64_t seed, std::size_t workers = 1);

ChatRequest qa_generation_request(const StoredDocument& doc);

// ---- similarity ------------------------------------------------------------

/// 100 * max(0, cosine) of the two embeddings; 0 when either is the zero vector.
double semantic_score(std::string_view a, std::string_view b, const Encoder& encoder);

/// 100 * cosine of TF-IDF vectors over analyze_greek terms, idf = ln(N/(1+df))
/// clamped at 0. Without corpus statistics the weights are raw counts.
double tfidf_similarity(std::string_view a, std::string_view b, const IndexStats* corpus_df = nullptr);

// ---- amounts ---------------------------------------------------------------

/// Euro amounts in euro cents. Greek format: '.' groups thousands, ','
/// separates two decimals. Numbers without decimals count only next to a
/// currency marker (€, ευρώ).
std::vector<std::int64_t> extract_amounts(std::string_view text);
/// "73.225,56"
std::string format_amount(std::int64_t cents);
/// Multiset Jaccard x 100.
double amount_match(std::string_view predicted, std::string_view truth);

// ---- automated track -------------------------------------------------------

struct ComparisonScores {
    double semantic_score = 0;
    double tfidf_similarity = 0;
    double amount_match = 0;
    bool equivalent = false;
};

struct PairResult {
    QAPair pair;
    std::string answer;
    ComparisonScores scores;
    bool failed = false;
    std::string error;
};

struct AutomatedReport {
    double threshold = 70.0;
    std::vector<PairResult> results;
    std::size_t total = 0;
    std::size_t equivalent = 0;
    std::size_t failed = 0;
    double mean_semantic = 0;
    double mean_tfidf = 0;
    double mean_amount = 0;

    double equivalent_percent() const noexcept;
    /// Re-derives the equivalence split for another threshold.
    AutomatedReport with_threshold(double threshold) const;
    /// (label, value) rows in table order.
    std::vector<std::pair<std::string, std::string>> rows() const;
};

using AnswerFn = std::function<std::string(const QAPair&)>;

AutomatedReport evaluate_automated(const std::vector<QAPair>& pairs, const AnswerFn& system, const Encoder& encoder,
                                   const IndexStats* corpus_df = nullptr, double threshold = 70.0, std::size_t workers = 1);

nlohmann::json to_json(const AutomatedReport& report, bool include_pairs = true);
std::string render_table(const AutomatedReport& report);

// ---- manual track ----------------------------------------------------------

enum class Verdict { Full, Partial, Incorrect };
std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view text);

struct ManualEntry {
    Verdict verdict = Verdict::Incorrect;
    std::string note;
};

/// Entries in question order: count/list, total amount, signers, topics.
struct ManualOrgResult {
    std::string organization;
    std::vector<ManualEntry> entries;
};

inline constexpr const char* kManualQuestions[4] = {"Count & List", "Total Amount", "Signers", "Topics"};

struct ManualSummary {
    std::size_t total = 0;
    std::size_t full = 0;
    std::size_t partial = 0;
    std::size_t incorrect = 0;
    double accuracy = 0;                 // (full + 0.5 partial) / total * 100
    double per_question_accuracy[4] = {};
    std::optional<double> printed_accuracy;
    bool inconsistent = false;           // printed figure disagrees with the formula
};

std::vector<ManualOrgResult> manual_results_from_json(const nlohmann::json& j);
ManualSummary score_manual(const std::vector<ManualOrgResult>& results, std::optional<double> printed_accuracy = {});
nlohmann::json to_json(const ManualSummary& summary);
std::string render_table(const ManualSummary& summary);

/// Verdicts of the published manual study.
std::vector<ManualOrgResult> published_manual_results();
inline constexpr double kPublishedManualAccuracy = 85.0;

// ---- aggregation fixtures --------------------------------------------------

struct AggregationCheck {
    std::string id;
    std::string organization;
    std::int64_t ground_truth = 0;   // cents
    std::int64_t reported = 0;       // cents
    std::optional<std::int64_t> breakdown_sum;
    bool breakdown_consistent = true;
    bool matches = false;
    std::int64_t absolute_error = 0;
    double relative_accuracy = 0;    // reported / ground truth x 100
};

struct AggregationReport {
    std::vector<AggregationCheck> checks;
    std::size_t flagged() const noexcept;
};

AggregationReport verify_aggregation_fixtures(const nlohmann::json& fixtures);
/// Uses the fixture tables compiled into the library.
AggregationReport verify_aggregation_fixtures();
nlohmann::json to_json(const AggregationReport& report);
std::string render_table(const AggregationReport& report);

}  // namespace diavgeia
