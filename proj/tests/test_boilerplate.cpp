#include <doctest.h>

#include <chrono>
#include <fstream>
#include <map>

#include "diavgeia/boilerplate.hpp"
#include "oracles/dp_oracle.hpp"
#include "support/generators.hpp"
#include "support/temp_dir.hpp"

using namespace diavgeia;
using diavgeia::testing::TempDir;

namespace {

using Words = std::vector<std::string>;

Words random_words(SplitMix64& rng, std::size_t max_len, std::size_t vocab)
{
    Words w;
    const auto n = rng.below(max_len + 1);
    for (std::uint64_t i = 0; i < n; ++i) w.push_back("w" + std::to_string(rng.below(vocab)));
    return w;
}

std::string join(const Words& w) { return join_words(w, 0, w.size()); }

Segmentation seg(std::initializer_list<std::pair<SpanLabel, std::pair<std::size_t, std::size_t>>> spans)
{
    Segmentation s;
    for (const auto& [l, r] : spans) s.spans.push_back({l, r.first, r.second});
    return s;
}

constexpr auto BP = SpanLabel::Boilerplate;
constexpr auto CT = SpanLabel::Content;

/// Hands back the injected truth for each known text.
class OracleSegmenter final : public Segmenter {
  public:
    std::map<std::string, Segmentation> truth;
    Segmentation segment(std::string_view doc, const std::vector<std::string>&) const override
    {
        return truth.at(std::string(doc));
    }
    std::string name() const override { return "oracle"; }
};

class ScriptedModel final : public ChatModel {
  public:
    explicit ScriptedModel(std::string reply) : reply_(std::move(reply)) {}
    std::string model() const override { return "scripted"; }
    std::string complete(const ChatRequest&) const override
    {
        ++calls;
        return reply_;
    }
    mutable int calls = 0;

  private:
    std::string reply_;
};

}  // namespace

TEST_CASE("tokenize_words")
{
    CHECK(tokenize_words("α  β\nγ") == Words{"α", "β", "γ"});
    CHECK(tokenize_words("").empty());
    CHECK(tokenize_words(" \t\n ").empty());
    CHECK(tokenize_words("Ποσό: 381,22 €.") == Words{"Ποσό:", "381,22", "€."});
    const auto once = tokenize_words("  α β   γ ");
    CHECK(tokenize_words(join(once)) == once);
}

TEST_CASE("baseline segmentation examples")
{
    const std::string doc = "Α Β Γ X Δ Ε";
    auto s = baseline_segment(doc, {doc});
    CHECK(s.spans == std::vector<Span>{{BP, 0, 6}});

    s = baseline_segment(doc, {"κ λ μ ν"});
    CHECK(s.spans == std::vector<Span>{{CT, 0, 6}});

    s = baseline_segment(doc, {"Α Β Γ Y Δ Ε"}, {1.0, 1});
    CHECK(s.spans == std::vector<Span>{{BP, 0, 3}, {CT, 3, 4}, {BP, 4, 6}});

    // With the default minimum run the single content word is absorbed.
    CHECK(baseline_segment(doc, {"Α Β Γ Y Δ Ε"}).spans == std::vector<Span>{{BP, 0, 6}});

    CHECK_THROWS_AS(baseline_segment(doc, {}), InvalidArgument);
    CHECK_THROWS_AS(baseline_segment(doc, {doc}, {0.0, 1}), InvalidArgument);
    CHECK_THROWS_AS(baseline_segment(doc, {doc}, {1.5, 1}), InvalidArgument);
}

TEST_CASE("neighbour voting threshold")
{
    const std::string doc = "a b c d e f";
    const std::vector<std::string> neighbors = {"a b c x y z", "a b c d q r", "k l m d e f", "t u v w x y"};
    // Votes: a,b,c = 2; d = 2; e,f = 1.
    CHECK(baseline_segment(doc, neighbors, {0.5, 1}).spans == std::vector<Span>{{BP, 0, 4}, {CT, 4, 6}});
    CHECK(baseline_segment(doc, neighbors, {0.25, 1}).spans == std::vector<Span>{{BP, 0, 6}});
    CHECK(baseline_segment(doc, neighbors, {0.75, 1}).spans == std::vector<Span>{{CT, 0, 6}});
}

TEST_CASE("run smoothing flips the shortest run, boilerplate first on ties")
{
    std::vector<bool> m = {true, true, true, false, true, false, false, false};
    smooth_runs(m, 3);
    CHECK(m == std::vector<bool>{true, true, true, false, false, false, false, false});

    m = {true, true, false, true, true};
    smooth_runs(m, 2);
    CHECK(m == std::vector<bool>{true, true, true, true, true});

    m = {true, false};
    smooth_runs(m, 3);
    CHECK(m == std::vector<bool>{false, false});

    m = {true, true};
    smooth_runs(m, 3);
    CHECK(m == std::vector<bool>{true, true});
}

TEST_CASE("lcs_mask marks a longest common subsequence")
{
    SplitMix64 rng(77);
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = random_words(rng, 40, 6);
        const auto b = random_words(rng, 40, 6);
        const auto mask = lcs_mask(a, b);
        Words picked;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (mask[i]) picked.push_back(a[i]);
        }
        CHECK(picked.size() == oracle::lcs_length(a, b));
        // picked must be a subsequence of b
        std::size_t j = 0;
        for (const auto& w : b) {
            if (j < picked.size() && picked[j] == w) ++j;
        }
        CHECK(j == picked.size());
    }
}

TEST_CASE("segmenter output always satisfies the partition invariant")
{
    SplitMix64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const auto doc = join(random_words(rng, 60, 8));
        std::vector<std::string> neighbors;
        for (std::uint64_t i = 0, n = 1 + rng.below(4); i < n; ++i) neighbors.push_back(join(random_words(rng, 60, 8)));
        const BaselineOptions opts{0.25 + 0.25 * static_cast<double>(rng.below(4)), 1 + rng.below(4)};
        const auto s = baseline_segment(doc, neighbors, opts);
        CHECK_NOTHROW(s.validate(tokenize_words(doc).size()));
        for (std::size_t i = 0; s.spans.size() > 1 && i < s.spans.size(); ++i) CHECK(s.spans[i].size() >= opts.min_run);
    }
}

TEST_CASE("segmentation JSON interchange")
{
    const auto s = seg({{BP, {0, 3}}, {CT, {3, 5}}});
    auto j = to_json(s);
    CHECK(j.dump() == R"({"ada":"","spans":[{"end":3,"label":"BP","start":0},{"end":5,"label":"CT","start":3}]})");
    CHECK(segmentation_from_json(j) == s);
    j["spans"][1]["start"] = 2;
    CHECK_THROWS_AS(segmentation_from_json(j), SegmentationMismatch);
}

TEST_CASE("extract_parts and interleave")
{
    const std::string doc = "α β γ δ ε ζ";
    auto p = extract_parts(doc, seg({{CT, {0, 6}}}));
    CHECK(p.skeleton.empty());
    CHECK(p.contents == Words{doc});

    p = extract_parts(doc, seg({{BP, {0, 6}}}));
    CHECK(p.contents.empty());

    p = extract_parts(doc, seg({{BP, {0, 2}}, {CT, {2, 3}}, {BP, {3, 6}}}));
    CHECK(p.skeleton == Words{"α β", "δ ε ζ"});
    CHECK(p.contents == Words{"γ"});
    CHECK(interleave(p) == tokenize_words(doc));

    CHECK_THROWS_AS(extract_parts(doc, seg({{BP, {0, 7}}})), SegmentationMismatch);

    SplitMix64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const auto words = random_words(rng, 30, 50);
        std::vector<bool> mask(words.size());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.below(3) == 0;
        CHECK(interleave(extract_parts(join(words), Segmentation::from_mask(mask))) == words);
    }
}

TEST_CASE("swap reconstruction")
{
    const std::string a = "αρχή ένα δύο τέλος";
    const std::string b = "αρχή τρία τέλος";
    const auto sa = seg({{BP, {0, 1}}, {CT, {1, 3}}, {BP, {3, 4}}});
    const auto sb = seg({{BP, {0, 1}}, {CT, {1, 2}}, {BP, {2, 3}}});
    auto r = swap_reconstruct(a, sa, b, sb);
    CHECK(r.a_prime == b);
    CHECK(r.b_prime == a);

    r = swap_reconstruct("x y", seg({{CT, {0, 2}}}), "z", seg({{CT, {0, 1}}}));
    CHECK(r.a_prime == "z");
    CHECK(r.b_prime == "x y");

    // Two slots against one: A' fills slot 1, leaves slot 2 empty; B' gets both contents in its only slot.
    const std::string two = "Α c1 Β c2 Γ";
    const std::string one = "Α d1 Β";
    const auto s2 = seg({{BP, {0, 1}}, {CT, {1, 2}}, {BP, {2, 3}}, {CT, {3, 4}}, {BP, {4, 5}}});
    const auto s1 = seg({{BP, {0, 1}}, {CT, {1, 2}}, {BP, {2, 3}}});
    r = swap_reconstruct(two, s2, one, s1);
    CHECK(r.a_prime == "Α d1 Β Γ");
    CHECK(r.b_prime == "Α c1 c2 Β");

    // No content slot at all: contents are appended.
    r = swap_reconstruct("Α Β", seg({{BP, {0, 2}}}), "Α x", seg({{BP, {0, 1}}, {CT, {1, 2}}}));
    CHECK(r.a_prime == "Α Β x");
    CHECK(r.b_prime == "Α");
}

TEST_CASE("reconstruction error examples and properties")
{
    CHECK(reconstruction_error("α β γ", "α β γ") == 0.0);
    CHECK(reconstruction_error("α β γ", "α δ γ") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(reconstruction_error("α β γ", "") == 1.0);
    CHECK(reconstruction_error("", "") == 0.0);

    SplitMix64 rng(21);
    for (int i = 0; i < 300; ++i) {
        const auto x = join(random_words(rng, 20, 5));
        const auto y = join(random_words(rng, 20, 5));
        const auto e = reconstruction_error(x, y);
        CHECK(e == reconstruction_error(y, x));
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
        CHECK(reconstruction_error(x, x) == 0.0);
    }
}

TEST_CASE("word Levenshtein equals the full-matrix oracle on 1000 random pairs")
{
    SplitMix64 rng(1000);
    for (int i = 0; i < 1000; ++i) {
        const auto x = random_words(rng, 50, 7);
        const auto y = random_words(rng, 50, 7);
        const auto d = oracle::levenshtein(x, y);
        REQUIRE(word_levenshtein(x, y) == d);
        const auto denom = std::max(x.size(), y.size());
        const double expected = denom == 0 ? 0.0 : static_cast<double>(d) / static_cast<double>(denom);
        REQUIRE(reconstruction_error(join(x), join(y)) == expected);
    }
}

TEST_CASE("boilerplate extraction rate")
{
    const auto all_bp = seg({{BP, {0, 10}}});
    const auto all_ct = seg({{CT, {0, 10}}});
    CHECK(boilerplate_extraction_rate(all_bp, all_bp) == 1.0);
    const auto four = seg({{BP, {0, 4}}, {CT, {4, 10}}});
    CHECK(boilerplate_extraction_rate(all_ct, four) == 0.0);
    const auto pred = seg({{BP, {0, 3}}, {CT, {3, 10}}});
    const auto truth = seg({{CT, {0, 1}}, {BP, {1, 4}}, {CT, {4, 10}}});
    CHECK(boilerplate_extraction_rate(pred, truth) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(boilerplate_recall(pred, truth) == doctest::Approx(2.0 / 3.0));
    CHECK(boilerplate_recall(all_ct, all_ct) == 1.0);
    CHECK(boilerplate_extraction_rate(Segmentation{}, Segmentation{}) == 0.0);
    CHECK_THROWS_AS(boilerplate_extraction_rate(all_bp, seg({{BP, {0, 9}}})), SegmentationMismatch);

    // Bounded by the true boilerplate share, with equality when prediction covers it.
    CHECK(boilerplate_extraction_rate(all_bp, four) == 0.4);
    CHECK(boilerplate_extraction_rate(pred, four) < 0.4);
}

TEST_CASE("perfect-template swap: RE is exactly zero and BER equals the injected share")
{
    const auto pairs = generate_template_pairs(100, 2024);
    std::vector<DocumentPair> docs;
    for (const auto& p : pairs) docs.push_back(p.pair);
    const auto report = run_swap_evaluation(docs, BaselineSegmenter{});
    REQUIRE(report.failures.empty());
    REQUIRE(report.pairs.size() == 100);
    CHECK(report.re.mean == 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(report.pairs[i].re_ab == 0.0);
        CHECK(report.pairs[i].re_ba == 0.0);
        CHECK(report.pairs[i].ber_a == pairs[i].boilerplate_fraction_a);
        CHECK(report.pairs[i].ber_b == pairs[i].boilerplate_fraction_b);
        CHECK(report.pairs[i].ber_recall_a == 1.0);
    }
    CHECK(render_table(report).find("baseline | 0.0000 ± 0.0000 |") != std::string::npos);
}

TEST_CASE("constructed perturbations give hand-computed reconstruction errors")
{
    auto pairs = generate_template_pairs(10, 7);
    OracleSegmenter oracle_seg;
    std::vector<DocumentPair> docs;
    std::vector<double> expected_ab, expected_ba;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto p = pairs[i].pair;
        // Substitute i % 3 skeleton words of B; each substitution costs one edit in A' vs B.
        auto words = tokenize_words(p.text_b);
        const auto mask = p.truth_b->mask();
        std::size_t changed = 0;
        for (std::size_t w = 0; w < words.size() && changed < i % 3; ++w) {
            if (mask[w]) {
                words[w] = "ΑΛΛΑΓΗ" + std::to_string(w);
                ++changed;
            }
        }
        p.text_b = join(words);
        oracle_seg.truth[p.text_a] = *p.truth_a;
        oracle_seg.truth[p.text_b] = *p.truth_b;
        // A' vs B and B' vs A differ by exactly the substituted words.
        expected_ab.push_back(static_cast<double>(changed) / static_cast<double>(words.size()));
        expected_ba.push_back(static_cast<double>(changed) / static_cast<double>(tokenize_words(p.text_a).size()));
        docs.push_back(p);
    }
    const auto report = run_swap_evaluation(docs, oracle_seg, 4);
    REQUIRE(report.pairs.size() == 10);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        CHECK(report.pairs[i].re_ab == expected_ab[i]);
        CHECK(report.pairs[i].re_ba == expected_ba[i]);
    }
}

TEST_CASE("swap evaluation records per-pair failures")
{
    OracleSegmenter empty;
    auto pairs = generate_template_pairs(3, 1);
    std::vector<DocumentPair> docs;
    for (auto& p : pairs) docs.push_back(p.pair);
    // A segmentation for the wrong word count fails the pair, not the run.
    empty.truth[docs[0].text_a] = seg({{BP, {0, 1}}});
    empty.truth[docs[0].text_b] = *docs[0].truth_b;
    for (std::size_t i = 1; i < docs.size(); ++i) {
        empty.truth[docs[i].text_a] = *docs[i].truth_a;
        empty.truth[docs[i].text_b] = *docs[i].truth_b;
    }
    const auto report = run_swap_evaluation(docs, empty);
    CHECK(report.pairs.size() == 2);
    REQUIRE(report.failures.size() == 1);
    CHECK(report.failures[0].first == "0");
    CHECK(format_mean_std({0.0097, 0.037}) == "0.0097 ± 0.0370");
}

TEST_CASE("LLM adapters replay recorded responses")
{
    TempDir tmp;
    auto cache = std::make_shared<ReplayCache>(tmp / "replay");
    const std::string doc = "Α Β Γ X Δ Ε";
    const std::vector<std::string> neighbors = {"Α Β Γ Y Δ Ε"};

    const auto seg_reply = R"({"spans":[{"label":"BP","start":0,"end":3},{"label":"CT","start":3,"end":4},{"label":"BP","start":4,"end":6}]})";
    cache->put(request_key("gpt-5-mini-2025-08-07", segment_request(doc, neighbors)), "gpt-5-mini-2025-08-07", seg_reply);
    cache->put(request_key("gpt-5-mini-2025-08-07", classify_request(doc, neighbors)), "gpt-5-mini-2025-08-07",
               "```json\n{\"likelihood\": 0.92}\n```");

    auto model = std::make_shared<ReplayingChatModel>("gpt-5-mini-2025-08-07", cache);
    CHECK(LlmSegmenter(model).segment(doc, neighbors).spans == std::vector<Span>{{BP, 0, 3}, {CT, 3, 4}, {BP, 4, 6}});
    CHECK(LlmClassifier(model).classify(doc, neighbors) == 0.92);
    CHECK_THROWS_AS(LlmSegmenter(model).segment("άλλο κείμενο", neighbors), RemoteError);

    // A live model is called once and then served from the cache.
    auto live = std::make_shared<ScriptedModel>(R"({"likelihood": 0.25})");
    auto recording = std::make_shared<ReplayingChatModel>("scripted", cache, live);
    CHECK(LlmClassifier(recording).classify(doc, neighbors) == 0.25);
    CHECK(LlmClassifier(recording).classify(doc, neighbors) == 0.25);
    CHECK(live->calls == 1);
}

TEST_CASE("LLM reply parsing rejects malformed output")
{
    CHECK(parse_classify_reply("0.92") == 0.92);
    CHECK(parse_classify_reply("\"0.5\"") == 0.5);
    CHECK_THROWS_AS(parse_classify_reply("1.7"), UnparseableResponse);
    CHECK_THROWS_AS(parse_classify_reply("probably"), UnparseableResponse);

    const std::string overlapping = R"({"spans":[{"label":"BP","start":0,"end":4},{"label":"CT","start":3,"end":6}]})";
    try {
        parse_segment_reply(overlapping, 6);
        FAIL("expected UnparseableResponse");
    } catch (const UnparseableResponse& e) {
        CHECK(e.raw() == overlapping);
    }
    CHECK_THROWS_AS(parse_segment_reply(R"({"spans":[{"label":"BP","start":0,"end":5}]})", 6), UnparseableResponse);
    CHECK_THROWS_AS(parse_segment_reply("no json here", 6), UnparseableResponse);
    // Split runs are merged into maximal spans.
    CHECK(parse_segment_reply(R"({"spans":[{"label":"BP","start":0,"end":2},{"label":"BP","start":2,"end":6}]})", 6).spans ==
          std::vector<Span>{{BP, 0, 6}});
}

namespace {

VectorStoreF embed_texts(const std::vector<std::string>& texts)
{
    ReferenceEncoder enc;
    VectorStoreF store(enc.dimension());
    for (std::size_t i = 0; i < texts.size(); ++i) store.add(diavgeia::testing::indexed_ada(i), enc.encode(texts[i]));
    return store;
}

}  // namespace

TEST_CASE("prevalence study")
{
    SplitMix64 rng(3);
    const std::string s1 = "Ο Δήμαρχος έχοντας υπόψη τις διατάξεις του άρθρου 58 του Ν. 3852/2010 και την ανάγκη";
    const std::string s2 = "αποφασίζει την έγκριση της δαπάνης και τη διάθεση της πίστωσης σε βάρος του ΚΑ";
    const std::string s3 = "του προϋπολογισμού οικονομικού έτους και ορίζει υπόλογο τον υπάλληλο της υπηρεσίας";
    std::vector<std::string> templated, unrelated;
    for (int i = 0; i < 30; ++i) {
        templated.push_back(s1 + " " + "ΠΟΣΟ" + std::to_string(i) + " ΕΙΔΟΣ" + std::to_string(i) + " " + s2 + " " +
                            "ΚΩΔ" + std::to_string(i) + " " + s3);
        Words w;
        for (int j = 0; j < 30; ++j) w.push_back("λ" + std::to_string(i) + "_" + std::to_string(rng.below(1u << 20)));
        unrelated.push_back(join(w));
    }
    const BaselineClassifier classifier;

    TempDir tmp;
    for (const auto* texts : {&templated, &unrelated}) {
        const auto store = embed_texts(*texts);
        auto load = [&](const std::string& ada) { return (*texts)[static_cast<std::size_t>(*store.find(ada))]; };
        const auto report = prevalence_study(store, load, {5, 10}, classifier);
        REQUIRE(report.per_k.size() == 2);
        CHECK(report.per_k[0].k == 5);
        CHECK(report.per_k[1].k == 10);
        for (const auto& r : report.per_k) {
            CHECK(r.classified + r.failures == r.clusters);
            CHECK(r.rate == (texts == &templated ? 1.0 : 0.0));
        }
        write_prevalence_csv(report, tmp / "prev.csv");
        std::ifstream in(tmp / "prev.csv");
        std::string header;
        std::getline(in, header);
        CHECK(header == "k,cluster,ada,cluster_size,likelihood,boilerplate,error");
    }
}
