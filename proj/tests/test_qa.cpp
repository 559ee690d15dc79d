#include <doctest.h>

#include <cmath>

#include "diavgeia/analyzer.hpp"
#include "diavgeia/qa.hpp"
#include "diavgeia/rag.hpp"
#include "support/generators.hpp"
#include "support/temp_dir.hpp"

using namespace diavgeia;
using diavgeia::testing::TempDir;

namespace {

constexpr const char* kTextA = "Η απόφαση αφορά την ανάληψη υποχρέωσης ύψους 381,22 € για κρατήσεις τραπεζών.";
constexpr const char* kTextB = "Ανάληψη υποχρέωσης 381,22 ευρώ για τραπεζικές κρατήσεις της ΔΕΥΑ Θήρας.";

std::vector<std::int64_t> cents(std::initializer_list<std::int64_t> v) { return v; }

/// Builds a corpus of `n` documents, each carrying one amount.
std::vector<StoredDocument> make_corpus(const CorpusLayout& layout, std::size_t n, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    std::vector<StoredDocument> docs;
    for (std::size_t i = 0; i < n; ++i) {
        StoredDocument d;
        d.record = testing::random_record(rng, testing::indexed_ada(i + 100));
        d.body_markdown = testing::random_greek_text(rng, 40) + " ποσό " + format_amount(static_cast<std::int64_t>(rng.below(10000000))) + " €.";
        d.source = DocumentSource::PreextractedText;
        d.stored_at = 1609459200000;
        store_document(layout, d);
        docs.push_back(d);
    }
    return docs;
}

class ReplayQaModel final : public ChatModel {
  public:
    std::string model() const override { return "replay-qa"; }
    std::string complete(const ChatRequest& req) const override
    {
        const auto& prompt = req.messages.back().content;
        const auto at = prompt.find("ADA: ");
        const auto ada = prompt.substr(at + 5, prompt.find('\n', at) - at - 5);
        if (ada == bad_ada) return "I cannot answer that.";
        ++calls;
        return nlohmann::json{{"question", "Τι αφορά η απόφαση " + ada + ";"}, {"answer", "Αφορά την " + ada + "."}}.dump();
    }
    std::string bad_ada;
    mutable std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("semantic score")
{
    ReferenceEncoder enc;
    CHECK(semantic_score(kTextA, kTextA, enc) == doctest::Approx(100.0).epsilon(1e-8));
    CHECK(semantic_score(kTextA, kTextB, enc) == semantic_score(kTextB, kTextA, enc));
    // Frozen by tests/oracles/reference_encoder.py.
    CHECK(std::abs(semantic_score(kTextA, kTextB, enc) - 63.243244274800) < 1e-9);
    CHECK(semantic_score("", kTextA, enc) == 0.0);
}

TEST_CASE("TF-IDF similarity")
{
    CHECK(tfidf_similarity(kTextA, kTextA) == 100.0);
    CHECK(tfidf_similarity("δήμος Αθηναίων", "νοσοκομείο Πατρών") == 0.0);
    CHECK(tfidf_similarity(kTextA, kTextB) == doctest::Approx(tfidf_similarity(kTextB, kTextA)).epsilon(1e-12));
    CHECK(tfidf_similarity("", "") == 0.0);

    REQUIRE(analyze_greek("alpha beta beta") == std::vector<std::string>{"alpha", "beta", "beta"});
    IndexStats df;
    df.n_docs = 10;
    df.df = {{"alpha", 1}, {"beta", 4}};
    // a = (ln5, 2 ln2), b = (ln2, ln10) over (alpha, beta | beta, gamma).
    CHECK(std::abs(tfidf_similarity("alpha beta beta", "beta gamma", &df) - 18.812183735093228) < 1e-9);

    // Terms present in more than N/2 documents carry no weight.
    df.df["beta"] = 9;
    CHECK(tfidf_similarity("beta", "beta beta", &df) == 0.0);
}

TEST_CASE("amount extraction")
{
    CHECK(extract_amounts("73.225,56 €") == cents({7322556}));
    CHECK(extract_amounts("").empty());
    CHECK(extract_amounts("52.736,56 + 10.416,00") == cents({5273656, 1041600}));
    CHECK(extract_amounts("52.736,56 + 10.416,00 + 60,00 + 8.680,00 + 1.333,00 = 73.225,56 €") ==
          cents({5273656, 1041600, 6000, 868000, 133300, 7322556}));
    CHECK(extract_amounts("ποσό 1.333 ευρώ και 250 € και €40") == cents({133300, 25000, 4000}));
    CHECK(extract_amounts("ΑΔΑ 9ΥΛ9469ΗΥΖ-Ι19 του 2021, αρ. 1234, 12.03.2021").empty());
    CHECK(extract_amounts("1,5 και 1,234 και 3,14159").empty());
    CHECK(extract_amounts("381,22€, 381,22 ΕΥΡΩ") == cents({38122, 38122}));

    SplitMix64 rng(7);
    for (int i = 0; i < 2000; ++i) {
        const auto v = static_cast<std::int64_t>(rng.below(100'000'000'000ULL));
        const auto text = "το ποσό των " + format_amount(v) + " € εγκρίνεται";
        REQUIRE(extract_amounts(text) == cents({v}));
    }
    CHECK(format_amount(7322556) == "73.225,56");
    CHECK(format_amount(5) == "0,05");
    CHECK(format_amount(100000000) == "1.000.000,00");
}

TEST_CASE("amount match")
{
    CHECK(amount_match("381,22 €", "381,22 €") == 100.0);
    CHECK(amount_match("", "100,00 €") == 0.0);
    CHECK(amount_match("", "") == 100.0);
    CHECK(amount_match("5,00 €", "κανένα ποσό") == 0.0);
    CHECK(amount_match("1,00 και 3,00", "1,00 και 2,00") == doctest::Approx(100.0 / 3).epsilon(1e-12));
    CHECK(amount_match("1,00 1,00", "1,00") == 50.0);
}

TEST_CASE("automated evaluation bounds and table labels")
{
    std::vector<QAPair> pairs = {
        {"Ποιο το ποσό;", "Το ποσό είναι 381,22 € για κρατήσεις τραπεζών.", "ΨΣ02ΟΕΨΠ-ΛΔΤ"},
        {"Ποιος υπογράφει;", "Υπογράφει ο Διευθυντής Ευάγγελος Ζώρζος.", "6Μ6ΨΟΕΨΠ-ΛΗ2"},
    };
    ReferenceEncoder enc;
    const auto verbatim = evaluate_automated(pairs, [](const QAPair& p) { return p.ground_truth; }, enc);
    CHECK(verbatim.equivalent == 2);
    CHECK(verbatim.equivalent_percent() == 100.0);
    CHECK(verbatim.mean_semantic == doctest::Approx(100.0));
    CHECK(verbatim.mean_tfidf == 100.0);
    CHECK(verbatim.mean_amount == 100.0);

    const auto empty = evaluate_automated(pairs, [](const QAPair&) { return std::string(); }, enc, nullptr, 70.0, 2);
    CHECK(empty.equivalent == 0);
    CHECK(empty.mean_semantic == 0.0);
    CHECK(empty.mean_tfidf == 0.0);
    CHECK(empty.mean_amount == 50.0);  // the signer answer holds no amount on either side

    const std::vector<std::string> labels = {"Total Comparisons",      "Semantically Equivalent (≥ 70%)",
                                             "Not Equivalent (< 70%)", "Average Semantic Score",
                                             "Average TF-IDF Similarity", "Average Amount Match"};
    std::vector<std::string> got;
    for (const auto& [label, value] : verbatim.rows()) got.push_back(label);
    CHECK(got == labels);
    CHECK(render_table(verbatim).find("Semantically Equivalent (≥ 70%) | 2 (100.0%)") != std::string::npos);

    const auto failing = evaluate_automated(
        pairs,
        [](const QAPair& p) -> std::string {
            if (p.ada == "ΨΣ02ΟΕΨΠ-ΛΔΤ") throw GenerationFailed("boom");
            return p.ground_truth;
        },
        enc);
    CHECK(failing.failed == 1);
    CHECK(failing.equivalent == 1);
    CHECK(failing.results[0].scores.semantic_score == 0.0);
    CHECK(to_json(failing).at("results")[0].at("error") == "boom");
}

TEST_CASE("threshold changes re-derive the split without re-scoring")
{
    std::vector<QAPair> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({"q" + std::to_string(i), kTextA, "ΨΣ02ΟΕΨΠ-ΛΔΤ"});
    ReferenceEncoder enc;
    int calls = 0;
    const auto r = evaluate_automated(pairs, [&](const QAPair&) { ++calls; return std::string(kTextB); }, enc);
    CHECK(r.equivalent == 0);
    const auto lower = r.with_threshold(60.0);
    CHECK(calls == 10);
    CHECK(lower.equivalent == 10);
    CHECK(lower.mean_semantic == r.mean_semantic);
    CHECK(lower.rows()[1].first == "Semantically Equivalent (≥ 60%)");
}

TEST_CASE("QA pair generation")
{
    TempDir dir;
    CorpusLayout layout(dir.path());
    const auto docs = make_corpus(layout, 12, 3);
    ReplayQaModel model;

    const auto a = generate_qa_pairs(layout, 5, model, 42);
    REQUIRE(a.pairs.size() == 5);
    CHECK(a.skipped.empty());
    for (const auto& p : a.pairs) {
        CHECK(validate_ada(p.ada));
        CHECK(p.question.find(p.ada) != std::string::npos);
    }
    const auto b = generate_qa_pairs(layout, 5, model, 42, 3);
    CHECK(a.pairs == b.pairs);
    CHECK_FALSE(generate_qa_pairs(layout, 5, model, 43).pairs == a.pairs);

    CHECK_THROWS_AS(generate_qa_pairs(layout, 13, model, 42), InvalidSample);

    model.bad_ada = a.pairs[0].ada;
    const auto c = generate_qa_pairs(layout, 5, model, 42);
    CHECK(c.pairs.size() == 4);
    REQUIRE(c.skipped.size() == 1);
    CHECK(c.skipped[0].ada == a.pairs[0].ada);

    write_qa_pairs(dir / "pairs.jsonl", a.pairs);
    CHECK(read_qa_pairs(dir / "pairs.jsonl") == a.pairs);
    CHECK_THROWS_AS(qa_pair_from_json({{"question", "q"}, {"ground_truth", "a"}, {"ada", "bad"}}), CorruptRecord);
}

TEST_CASE("end-to-end evaluation through the RAG pipeline")
{
    TempDir dir;
    CorpusLayout layout(dir / "corpus");
    const auto docs = make_corpus(layout, 50, 11);
    SearchIndex index;
    for (const auto& d : docs) index.index_document(d);
    IndexRetriever retriever(index);
    FileSessionStore store(dir / "sessions");

    std::vector<QAPair> pairs;
    std::map<std::string, std::string> answers;
    for (const auto& d : docs) {
        QAPair p{"Ποιο ποσό αναφέρει η απόφαση για " + d.record.subject + ";", d.body_markdown.substr(d.body_markdown.find("ποσό")),
                 d.record.ada};
        answers[p.question] = p.ground_truth;
        pairs.push_back(p);
    }
    ReferenceEncoder enc;
    const auto df = index.stats();

    auto run = [&](const Generator& gen) {
        RagService svc(retriever, gen, store);
        return evaluate_automated(
            pairs, [&](const QAPair& p) { return svc.ask(svc.create_session().session_id, p.question).text; }, enc, &df, 70.0, 4);
    };
    const auto verbatim = run(ScriptedGenerator(answers));
    CHECK(verbatim.failed == 0);
    CHECK(verbatim.equivalent_percent() == 100.0);
    CHECK(verbatim.mean_amount == 100.0);

    const auto empty = run(ScriptedGenerator({}, ""));
    CHECK(empty.equivalent_percent() == 0.0);
    CHECK(empty.mean_semantic == 0.0);
    CHECK(empty.mean_amount == 0.0);

    const auto echo = run(EchoGenerator());
    CHECK(echo.failed == 0);
    CHECK(echo.total == 50);
}

TEST_CASE("manual protocol scorer")
{
    const auto published = published_manual_results();
    REQUIRE(published.size() == 5);
    const auto s = score_manual(published, kPublishedManualAccuracy);
    CHECK(s.total == 20);
    CHECK(s.full == 14);
    CHECK(s.partial == 3);
    CHECK(s.incorrect == 3);
    CHECK(s.accuracy == 77.5);
    CHECK(s.inconsistent);
    CHECK(s.per_question_accuracy[1] == 60.0);
    CHECK(s.per_question_accuracy[3] == 100.0);
    const auto table = render_table(s);
    CHECK(table.find("77.5%") != std::string::npos);
    CHECK(table.find("85.0%") != std::string::npos);

    std::vector<ManualOrgResult> all_full(5, ManualOrgResult{"x", std::vector<ManualEntry>(4, {Verdict::Full, ""})});
    CHECK(score_manual(all_full).accuracy == 100.0);
    CHECK_FALSE(score_manual(all_full, 100.0).inconsistent);
    std::vector<ManualOrgResult> all_wrong(5, ManualOrgResult{"x", std::vector<ManualEntry>(4, {Verdict::Incorrect, ""})});
    CHECK(score_manual(all_wrong).accuracy == 0.0);

    auto broken = all_full;
    broken[2].entries.pop_back();
    CHECK_THROWS_AS(score_manual(broken), MalformedResult);
    CHECK_THROWS_AS(parse_verdict("MOSTLY"), MalformedResult);
}

TEST_CASE("aggregation fixtures")
{
    const auto r = verify_aggregation_fixtures();
    REQUIRE(r.checks.size() == 4);
    const auto& ksot = r.checks[0];
    CHECK(ksot.ground_truth == 7322556);
    REQUIRE(ksot.breakdown_sum);
    CHECK(*ksot.breakdown_sum == 7322556);
    CHECK(ksot.matches);
    CHECK(r.checks[1].reported == 38122);
    CHECK(r.checks[1].matches);
    CHECK(r.checks[2].matches);
    const auto& laiko = r.checks[3];
    CHECK_FALSE(laiko.matches);
    CHECK(laiko.absolute_error == 9520080);
    CHECK(std::round(laiko.relative_accuracy) == 72.0);
    CHECK(r.flagged() == 1);
    CHECK(render_table(r).find("FLAGGED") != std::string::npos);

    const auto bad = nlohmann::json::parse(R"({"aggregation":[{"id":"x","ground_truth":"10,00","response":"4,00 + 5,00 = 10,00"}]})");
    const auto rb = verify_aggregation_fixtures(bad);
    CHECK_FALSE(rb.checks[0].breakdown_consistent);
    CHECK(rb.flagged() == 1);
}
