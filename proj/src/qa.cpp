#include "diavgeia/qa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "diavgeia/analyzer.hpp"
#include "diavgeia/embedded/aggregation_fixtures.hpp"
#include "diavgeia/embedded/qa_generation_prompt_v1.hpp"
#include "diavgeia/hashing.hpp"
#include "diavgeia/parallel.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace {

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

// ---- QA pairs --------------------------------------------------------------

nlohmann::json to_json(const QAPair& pair)
{
    return {{"question", pair.question}, {"ground_truth", pair.ground_truth}, {"ada", pair.ada}};
}

QAPair qa_pair_from_json(const nlohmann::json& j)
{
    QAPair p;
    try {
        p.question = j.at("question").get<std::string>();
        p.ground_truth = j.at("ground_truth").get<std::string>();
        p.ada = j.at("ada").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(std::string("QA pair: ") + e.what());
    }
    if (p.question.empty() || p.ground_truth.empty()) throw CorruptRecord("QA pair with empty text");
    if (!validate_ada(p.ada)) throw CorruptRecord("QA pair with invalid ADA '" + p.ada + "'");
    return p;
}

std::vector<QAPair> read_qa_pairs(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open " + path.string());
    std::vector<QAPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(qa_pair_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw CorruptRecord(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_qa_pairs(const std::filesystem::path& path, const std::vector<QAPair>& pairs)
{
    std::ofstream out(path, std::ios::trunc);
    for (const auto& p : pairs) out << to_json(p).dump() << '\n';
    if (!out) throw IoError("cannot write " + path.string());
}

ChatRequest qa_generation_request(const StoredDocument& doc)
{
    ChatRequest req;
    req.json_output = true;
    req.max_output_tokens = 400;
    req.messages.push_back({"user", render_template(embedded::qa_generation_prompt_v1,
                                                    {{"ada", doc.record.ada},
                                                     {"header", render_metadata_header(doc.record)},
                                                     {"body", std::string(utf8::prefix(doc.body_markdown, 6000))}})});
    return req;
}

QaGenerationReport generate_qa_pairs(const CorpusLayout& layout, std::size_t sample_size, const ChatModel& generator,
                                     std::uint64_t seed, std::size_t workers)
{
    auto adas = layout.list_adas();
    if (sample_size > adas.size()) {
        throw InvalidSample("sample of " + std::to_string(sample_size) + " from a corpus of " + std::to_string(adas.size()));
    }
    std::sort(adas.begin(), adas.end());
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) {
        std::swap(adas[i], adas[i + rng.below(adas.size() - i)]);
    }
    adas.resize(sample_size);

    std::vector<std::optional<QAPair>> pairs(sample_size);
    std::vector<std::string> errors(sample_size);
    parallel_for(
        sample_size, workers,
        [&](std::size_t i) {
            try {
                const auto req = qa_generation_request(load_document(layout, adas[i]));
                for (int attempt = 1; attempt <= 2; ++attempt) {
                    try {
                        const auto reply = nlohmann::json::parse(strip_to_json_object(generator.complete(req)));
                        QAPair p{reply.at("question").get<std::string>(), reply.at("answer").get<std::string>(), adas[i]};
                        if (p.question.empty() || p.ground_truth.empty()) throw UnparseableResponse("empty field", {});
                        pairs[i] = std::move(p);
                        return;
                    } catch (const UnparseableResponse& e) {
                        errors[i] = e.what();
                    } catch (const nlohmann::json::exception& e) {
                        errors[i] = std::string("schema: ") + e.what();
                    }
                }
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        },
        1);

    QaGenerationReport report;
    for (std::size_t i = 0; i < sample_size; ++i) {
        if (pairs[i]) report.pairs.push_back(std::move(*pairs[i]));
        else report.skipped.push_back({adas[i], errors[i]});
    }
    return report;
}

// ---- similarity ------------------------------------------------------------

double semantic_score(std::string_view a, std::string_view b, const Encoder& encoder)
{
    const Eigen::VectorXd u = encoder.encode(a);
    const Eigen::VectorXd v = encoder.encode(b);
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0 || nv == 0) return 0.0;
    const double cos = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    return 100.0 * std::max(0.0, cos);
}

double tfidf_similarity(std::string_view a, std::string_view b, const IndexStats* corpus_df)
{
    if (a == b && !analyze_greek(a).empty()) return 100.0;
    std::map<std::string, double> ta;
    std::map<std::string, double> tb;
    for (auto& t : analyze_greek(a)) ta[std::move(t)] += 1;
    for (auto& t : analyze_greek(b)) tb[std::move(t)] += 1;

    auto idf = [&](const std::string& term) {
        if (!corpus_df) return 1.0;
        const auto it = corpus_df->df.find(term);
        const double df = it == corpus_df->df.end() ? 0.0 : static_cast<double>(it->second);
        return std::max(0.0, std::log(static_cast<double>(corpus_df->n_docs) / (1.0 + df)));
    };
    double dot = 0, na = 0, nb = 0;
    for (const auto& [term, tf] : ta) {
        const double w = tf * idf(term);
        na += w * w;
        if (const auto it = tb.find(term); it != tb.end()) dot += w * it->second * idf(term);
    }
    for (const auto& [term, tf] : tb) {
        const double w = tf * idf(term);
        nb += w * w;
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(100.0 * dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 100.0);
}

// ---- amounts ---------------------------------------------------------------

namespace {

bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

bool is_word_char(char32_t c)
{
    return is_digit(c) || (c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z') || (c >= 0x0370 && c <= 0x03FF) ||
           (c >= 0x1F00 && c <= 0x1FFF);
}

bool starts_with_at(const std::u32string& s, std::size_t pos, std::u32string_view word)
{
    return s.size() >= pos + word.size() && std::u32string_view(s).substr(pos, word.size()) == word;
}

bool currency_after(const std::u32string& s, std::size_t pos)
{
    while (pos < s.size() && (s[pos] == U' ' || s[pos] == 0xA0)) ++pos;
    if (pos < s.size() && s[pos] == U'€') return true;
    for (std::u32string_view w : {U"ευρώ", U"Ευρώ", U"ΕΥΡΩ", U"ευρω", U"EUR"}) {
        if (starts_with_at(s, pos, w) && (pos + w.size() == s.size() || !is_word_char(s[pos + w.size()]))) return true;
    }
    return false;
}

bool currency_before(const std::u32string& s, std::size_t pos)
{
    while (pos > 0 && (s[pos - 1] == U' ' || s[pos - 1] == 0xA0)) --pos;
    return pos > 0 && s[pos - 1] == U'€';
}

std::size_t digit_run(const std::u32string& s, std::size_t pos)
{
    std::size_t end = pos;
    while (end < s.size() && is_digit(s[end])) ++end;
    return end - pos;
}

}  // namespace

std::vector<std::int64_t> extract_amounts(std::string_view text)
{
    const auto s = utf8::decode(text);
    std::vector<std::int64_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(s[i]) || (i > 0 && (is_word_char(s[i - 1]) || s[i - 1] == U'.' || s[i - 1] == U','))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        std::size_t lead = digit_run(s, i);
        std::int64_t euros = 0;
        for (std::size_t k = 0; k < lead; ++k) euros = euros * 10 + (s[i + k] - U'0');
        i += lead;
        if (lead <= 3) {
            while (i + 4 <= s.size() && s[i] == U'.' && digit_run(s, i + 1) == 3) {
                for (std::size_t k = 1; k <= 3; ++k) euros = euros * 10 + (s[i + k] - U'0');
                i += 4;
            }
        }
        bool decimals = false;
        std::int64_t cents = 0;
        if (i + 3 <= s.size() && s[i] == U',' && digit_run(s, i + 1) == 2) {
            cents = (s[i + 1] - U'0') * 10 + (s[i + 2] - U'0');
            i += 3;
            decimals = true;
        }
        const bool clean_end = i == s.size() || (!is_word_char(s[i]) && !(s[i] == U',' && i + 1 < s.size() && is_digit(s[i + 1])) &&
                                                 !(s[i] == U'.' && i + 1 < s.size() && is_digit(s[i + 1])));
        if (!clean_end) {
            while (i < s.size() && (is_word_char(s[i]) || s[i] == U'.' || s[i] == U',')) {
                if ((s[i] == U'.' || s[i] == U',') && !(i + 1 < s.size() && is_digit(s[i + 1]))) break;
                ++i;
            }
            continue;
        }
        if (decimals || currency_after(s, i) || currency_before(s, start)) out.push_back(euros * 100 + cents);
    }
    return out;
}

std::string format_amount(std::int64_t cents)
{
    const bool negative = cents < 0;
    if (negative) cents = -cents;
    std::string digits = std::to_string(cents / 100);
    std::string grouped;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) grouped.push_back('.');
        grouped.push_back(digits[i]);
    }
    const auto c = cents % 100;
    return (negative ? "-" : "") + grouped + "," + (c < 10 ? "0" : "") + std::to_string(c);
}

double amount_match(std::string_view predicted, std::string_view truth)
{
    const auto p = extract_amounts(predicted);
    const auto t = extract_amounts(truth);
    if (t.empty()) return p.empty() ? 100.0 : 0.0;
    std::map<std::int64_t, std::pair<std::size_t, std::size_t>> counts;
    for (auto v : p) ++counts[v].first;
    for (auto v : t) ++counts[v].second;
    std::size_t inter = 0, uni = 0;
    for (const auto& [v, c] : counts) {
        inter += std::min(c.first, c.second);
        uni += std::max(c.first, c.second);
    }
    return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- automated track -------------------------------------------------------

double AutomatedReport::equivalent_percent() const noexcept
{
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(equivalent) / static_cast<double>(total);
}

AutomatedReport AutomatedReport::with_threshold(double t) const
{
    AutomatedReport r = *this;
    r.threshold = t;
    r.equivalent = 0;
    for (auto& res : r.results) {
        res.scores.equivalent = !res.failed && res.scores.semantic_score >= t;
        r.equivalent += res.scores.equivalent;
    }
    return r;
}

std::vector<std::pair<std::string, std::string>> AutomatedReport::rows() const
{
    const auto thr = fixed(threshold, threshold == std::floor(threshold) ? 0 : 1);
    const auto not_equivalent = total - equivalent;
    const double not_eq_pct = total == 0 ? 0.0 : 100.0 - equivalent_percent();
    return {
        {"Total Comparisons", std::to_string(total)},
        {"Semantically Equivalent (≥ " + thr + "%)", std::to_string(equivalent) + " (" + fixed(equivalent_percent(), 1) + "%)"},
        {"Not Equivalent (< " + thr + "%)", std::to_string(not_equivalent) + " (" + fixed(not_eq_pct, 1) + "%)"},
        {"Average Semantic Score", fixed(mean_semantic, 1) + "%"},
        {"Average TF-IDF Similarity", fixed(mean_tfidf, 1) + "%"},
        {"Average Amount Match", fixed(mean_amount, 1) + "%"},
    };
}

AutomatedReport evaluate_automated(const std::vector<QAPair>& pairs, const AnswerFn& system, const Encoder& encoder,
                                   const IndexStats* corpus_df, double threshold, std::size_t workers)
{
    AutomatedReport report;
    report.threshold = threshold;
    report.results.resize(pairs.size());
    parallel_for(
        pairs.size(), workers,
        [&](std::size_t i) {
            auto& r = report.results[i];
            r.pair = pairs[i];
            try {
                r.answer = system(pairs[i]);
                r.scores.semantic_score = semantic_score(r.answer, pairs[i].ground_truth, encoder);
                r.scores.tfidf_similarity = tfidf_similarity(r.answer, pairs[i].ground_truth, corpus_df);
                r.scores.amount_match = amount_match(r.answer, pairs[i].ground_truth);
            } catch (const std::exception& e) {
                r.failed = true;
                r.error = e.what();
                r.scores = {};
            }
        },
        1);

    report.total = pairs.size();
    for (const auto& r : report.results) {
        report.failed += r.failed;
        report.mean_semantic += r.scores.semantic_score;
        report.mean_tfidf += r.scores.tfidf_similarity;
        report.mean_amount += r.scores.amount_match;
    }
    if (report.total > 0) {
        const auto n = static_cast<double>(report.total);
        report.mean_semantic /= n;
        report.mean_tfidf /= n;
        report.mean_amount /= n;
    }
    return report.with_threshold(threshold);
}

nlohmann::json to_json(const AutomatedReport& report, bool include_pairs)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [label, value] : report.rows()) rows.push_back({{"metric", label}, {"value", value}});
    nlohmann::json j = {{"threshold", report.threshold},
                        {"total", report.total},
                        {"equivalent", report.equivalent},
                        {"equivalent_percent", report.equivalent_percent()},
                        {"failed", report.failed},
                        {"mean_semantic", report.mean_semantic},
                        {"mean_tfidf", report.mean_tfidf},
                        {"mean_amount", report.mean_amount},
                        {"rows", rows}};
    if (include_pairs) {
        nlohmann::json results = nlohmann::json::array();
        for (const auto& r : report.results) {
            nlohmann::json e = to_json(r.pair);
            e["answer"] = r.answer;
            e["semantic_score"] = r.scores.semantic_score;
            e["tfidf_similarity"] = r.scores.tfidf_similarity;
            e["amount_match"] = r.scores.amount_match;
            e["equivalent"] = r.scores.equivalent;
            if (r.failed) e["error"] = r.error;
            results.push_back(std::move(e));
        }
        j["results"] = std::move(results);
    }
    return j;
}

namespace {

std::string two_column_table(const std::string& h1, const std::string& h2,
                             const std::vector<std::pair<std::string, std::string>>& rows)
{
    std::size_t w = utf8::length(h1);
    for (const auto& r : rows) w = std::max(w, utf8::length(r.first));
    auto pad = [&](const std::string& s) { return s + std::string(w - utf8::length(s), ' '); };
    std::string out = pad(h1) + " | " + h2 + "\n" + std::string(w, '-') + "-|-" + std::string(utf8::length(h2), '-') + "\n";
    for (const auto& [a, b] : rows) out += pad(a) + " | " + b + "\n";
    return out;
}

}  // namespace

std::string render_table(const AutomatedReport& report)
{
    auto out = two_column_table("Metric", "Value", report.rows());
    if (report.failed > 0) out += "\n" + std::to_string(report.failed) + " pair(s) failed and were scored 0.\n";
    return out;
}

// ---- manual track ----------------------------------------------------------

std::string_view to_string(Verdict v) noexcept
{
    switch (v) {
    case Verdict::Full: return "FULL";
    case Verdict::Partial: return "PARTIAL";
    case Verdict::Incorrect: return "INCORRECT";
    }
    return "INCORRECT";
}

Verdict parse_verdict(std::string_view text)
{
    if (text == "FULL") return Verdict::Full;
    if (text == "PARTIAL") return Verdict::Partial;
    if (text == "INCORRECT") return Verdict::Incorrect;
    throw MalformedResult("unknown verdict '" + std::string(text) + "'");
}

std::vector<ManualOrgResult> manual_results_from_json(const nlohmann::json& j)
{
    std::vector<ManualOrgResult> out;
    try {
        for (const auto& org : j) {
            ManualOrgResult r;
            r.organization = org.at("organization").get<std::string>();
            for (const auto& e : org.at("entries")) {
                r.entries.push_back({parse_verdict(e.at("verdict").get<std::string>()), e.value("note", std::string())});
            }
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResult(std::string("manual results: ") + e.what());
    }
    return out;
}

ManualSummary score_manual(const std::vector<ManualOrgResult>& results, std::optional<double> printed_accuracy)
{
    ManualSummary s;
    double per_q[4] = {};
    for (const auto& r : results) {
        if (r.entries.size() != 4) {
            throw MalformedResult(r.organization + ": expected 4 verdicts, got " + std::to_string(r.entries.size()));
        }
        for (std::size_t q = 0; q < 4; ++q) {
            switch (r.entries[q].verdict) {
            case Verdict::Full: ++s.full; per_q[q] += 1.0; break;
            case Verdict::Partial: ++s.partial; per_q[q] += 0.5; break;
            case Verdict::Incorrect: ++s.incorrect; break;
            }
        }
    }
    s.total = s.full + s.partial + s.incorrect;
    if (s.total > 0) s.accuracy = (static_cast<double>(s.full) + 0.5 * static_cast<double>(s.partial)) / static_cast<double>(s.total) * 100.0;
    for (std::size_t q = 0; q < 4; ++q) {
        s.per_question_accuracy[q] = results.empty() ? 0.0 : per_q[q] / static_cast<double>(results.size()) * 100.0;
    }
    s.printed_accuracy = printed_accuracy;
    s.inconsistent = printed_accuracy && std::abs(*printed_accuracy - s.accuracy) > 0.05;
    return s;
}

nlohmann::json to_json(const ManualSummary& s)
{
    nlohmann::json per_q = nlohmann::json::object();
    for (std::size_t q = 0; q < 4; ++q) per_q[kManualQuestions[q]] = s.per_question_accuracy[q];
    nlohmann::json j = {{"total", s.total},   {"full", s.full},         {"partial", s.partial},
                        {"incorrect", s.incorrect}, {"accuracy", s.accuracy}, {"per_question_accuracy", per_q},
                        {"inconsistent", s.inconsistent}};
    if (s.printed_accuracy) j["printed_accuracy"] = *s.printed_accuracy;
    return j;
}

std::string render_table(const ManualSummary& s)
{
    auto pct = [&](std::size_t n) {
        return s.total == 0 ? std::string("0.0%") : fixed(100.0 * static_cast<double>(n) / static_cast<double>(s.total), 1) + "%";
    };
    std::vector<std::pair<std::string, std::string>> rows = {
        {"Total Questions", std::to_string(s.total)},
        {"Fully Correct", std::to_string(s.full) + " (" + pct(s.full) + ")"},
        {"Partially Correct", std::to_string(s.partial) + " (" + pct(s.partial) + ")"},
        {"Incorrect", std::to_string(s.incorrect) + " (" + pct(s.incorrect) + ")"},
        {std::string("Overall Accuracy") + (s.inconsistent ? " *" : ""), fixed(s.accuracy, 1) + "%"},
    };
    for (std::size_t q = 0; q < 4; ++q) rows.push_back({std::string("  ") + kManualQuestions[q], fixed(s.per_question_accuracy[q], 1) + "%"});
    auto out = two_column_table("Metric", "Result", rows);
    if (s.inconsistent) {
        out += "\n* (Fully + 0.5 x Partially) / Total gives " + fixed(s.accuracy, 1) + "%; the published figure is " +
               fixed(*s.printed_accuracy, 1) + "%, which does not follow from these counts.\n";
    }
    return out;
}

namespace {

const nlohmann::json& embedded_fixtures()
{
    static const nlohmann::json j = nlohmann::json::parse(embedded::aggregation_fixtures);
    return j;
}

}  // namespace

std::vector<ManualOrgResult> published_manual_results() { return manual_results_from_json(embedded_fixtures().at("manual")); }

// ---- aggregation fixtures --------------------------------------------------

std::size_t AggregationReport::flagged() const noexcept
{
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(),
                                                  [](const auto& c) { return !c.matches || !c.breakdown_consistent; }));
}

AggregationReport verify_aggregation_fixtures(const nlohmann::json& fixtures)
{
    AggregationReport report;
    try {
        for (const auto& f : fixtures.at("aggregation")) {
            AggregationCheck c;
            c.id = f.at("id").get<std::string>();
            c.organization = f.value("organization", std::string());
            const auto truth = extract_amounts(f.at("ground_truth").get<std::string>());
            const auto response = f.at("response").get<std::string>();
            const auto said = extract_amounts(response);
            if (truth.size() != 1 || said.empty()) throw MalformedResult(c.id + ": cannot read the amounts");
            c.ground_truth = truth.front();
            c.reported = said.back();
            // "a + b + ... = total" breakdowns are re-added.
            if (said.size() > 1 && response.find('=') != std::string::npos) {
                std::int64_t sum = 0;
                for (std::size_t i = 0; i + 1 < said.size(); ++i) sum += said[i];
                c.breakdown_sum = sum;
                c.breakdown_consistent = sum == c.reported;
            }
            c.matches = c.reported == c.ground_truth;
            c.absolute_error = std::abs(c.reported - c.ground_truth);
            c.relative_accuracy = c.ground_truth == 0 ? 0.0 : 100.0 * static_cast<double>(c.reported) / static_cast<double>(c.ground_truth);
            report.checks.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResult(std::string("aggregation fixtures: ") + e.what());
    }
    return report;
}

AggregationReport verify_aggregation_fixtures() { return verify_aggregation_fixtures(embedded_fixtures()); }

nlohmann::json to_json(const AggregationReport& report)
{
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks) {
        nlohmann::json j = {{"id", c.id},
                            {"organization", c.organization},
                            {"ground_truth", format_amount(c.ground_truth)},
                            {"reported", format_amount(c.reported)},
                            {"matches", c.matches},
                            {"absolute_error", format_amount(c.absolute_error)},
                            {"relative_accuracy", c.relative_accuracy},
                            {"breakdown_consistent", c.breakdown_consistent}};
        if (c.breakdown_sum) j["breakdown_sum"] = format_amount(*c.breakdown_sum);
        checks.push_back(std::move(j));
    }
    return {{"checks", checks}, {"flagged", report.flagged()}};
}

std::string render_table(const AggregationReport& report)
{
    std::ostringstream out;
    out << "Check | Ground truth | Reported | Breakdown | Abs. error | Status\n";
    for (const auto& c : report.checks) {
        out << c.id << " | " << format_amount(c.ground_truth) << " € | " << format_amount(c.reported) << " € | "
            << (c.breakdown_sum ? format_amount(*c.breakdown_sum) + " €" : std::string("-")) << " | "
            << format_amount(c.absolute_error) << " € | ";
        if (c.matches && c.breakdown_consistent) out << "ok";
        else out << "FLAGGED (" << fixed(c.relative_accuracy, 1) << "% of ground truth)";
        out << "\n";
    }
    return out.str();
}

}  // namespace diavgeia
