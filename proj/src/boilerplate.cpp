#include "diavgeia/boilerplate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "diavgeia/embedded/classify_prompt_v1.hpp"
#include "diavgeia/embedded/segment_prompt_v1.hpp"
#include "diavgeia/hashing.hpp"
#include "diavgeia/parallel.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

// ---- Segmentation ----------------------------------------------------------

std::vector<bool> Segmentation::mask() const
{
    std::vector<bool> out(word_count(), false);
    for (const auto& s : spans) {
        if (s.label == SpanLabel::Boilerplate) std::fill(out.begin() + s.start, out.begin() + s.end, true);
    }
    return out;
}

void Segmentation::validate(std::size_t n) const
{
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto& s = spans[i];
        if (s.start != cursor) throw SegmentationMismatch("span " + std::to_string(i) + " does not start at " + std::to_string(cursor));
        if (s.end <= s.start) throw SegmentationMismatch("span " + std::to_string(i) + " is empty or reversed");
        if (i > 0 && spans[i - 1].label == s.label) throw SegmentationMismatch("adjacent spans share a label");
        cursor = s.end;
    }
    if (cursor != n) {
        throw SegmentationMismatch("spans cover " + std::to_string(cursor) + " words, document has " + std::to_string(n));
    }
}

Segmentation Segmentation::from_mask(const std::vector<bool>& boilerplate, std::string ada)
{
    Segmentation seg{std::move(ada), {}};
    for (std::size_t i = 0; i < boilerplate.size(); ++i) {
        const auto label = boilerplate[i] ? SpanLabel::Boilerplate : SpanLabel::Content;
        if (seg.spans.empty() || seg.spans.back().label != label) seg.spans.push_back({label, i, i + 1});
        else seg.spans.back().end = i + 1;
    }
    return seg;
}

nlohmann::json to_json(const Segmentation& seg)
{
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : seg.spans) {
        spans.push_back({{"label", s.label == SpanLabel::Boilerplate ? "BP" : "CT"}, {"start", s.start}, {"end", s.end}});
    }
    return {{"ada", seg.ada}, {"spans", spans}};
}

namespace {

Segmentation spans_from_json(const nlohmann::json& spans, std::string ada)
{
    Segmentation seg{std::move(ada), {}};
    for (const auto& s : spans) {
        const auto label = s.at("label").get<std::string>();
        SpanLabel l;
        if (label == "BP") l = SpanLabel::Boilerplate;
        else if (label == "CT") l = SpanLabel::Content;
        else throw SegmentationMismatch("unknown span label '" + label + "'");
        seg.spans.push_back({l, s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>()});
    }
    return seg;
}

}  // namespace

Segmentation segmentation_from_json(const nlohmann::json& j)
{
    try {
        auto seg = spans_from_json(j.at("spans"), j.value("ada", std::string()));
        seg.validate(seg.word_count());
        return seg;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(std::string("segmentation: ") + e.what());
    }
}

// ---- words -----------------------------------------------------------------

std::vector<std::string> tokenize_words(std::string_view text)
{
    std::vector<std::string> words;
    std::size_t pos = 0;
    std::size_t word_start = std::string_view::npos;
    while (pos < text.size()) {
        const std::size_t at = pos;
        const char32_t cp = utf8::next(text, pos);
        if (utf8::is_space(cp)) {
            if (word_start != std::string_view::npos) {
                words.emplace_back(text.substr(word_start, at - word_start));
                word_start = std::string_view::npos;
            }
        } else if (word_start == std::string_view::npos) {
            word_start = at;
        }
    }
    if (word_start != std::string_view::npos) words.emplace_back(text.substr(word_start));
    return words;
}

std::string join_words(const std::vector<std::string>& words, std::size_t begin, std::size_t end)
{
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out.push_back(' ');
        out += words[i];
    }
    return out;
}

// ---- LCS -------------------------------------------------------------------

namespace {

using Ids = std::vector<std::uint32_t>;

struct Interner {
    std::unordered_map<std::string_view, std::uint32_t> ids;
    Ids map(const std::vector<std::string>& words)
    {
        Ids out;
        out.reserve(words.size());
        for (const auto& w : words) out.push_back(ids.try_emplace(w, static_cast<std::uint32_t>(ids.size())).first->second);
        return out;
    }
};

// row[j] = LCS length of a and b[0, j)
void lcs_row(const std::uint32_t* a, std::size_t n, const std::uint32_t* b, std::size_t m, bool reversed,
             std::vector<std::uint32_t>& row)
{
    std::vector<std::uint32_t> prev(m + 1, 0);
    row.assign(m + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ai = reversed ? a[n - 1 - i] : a[i];
        row[0] = 0;
        for (std::size_t j = 1; j <= m; ++j) {
            const auto bj = reversed ? b[m - j] : b[j - 1];
            row[j] = ai == bj ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
        }
        std::swap(prev, row);
    }
    std::swap(prev, row);
}

// Hirschberg: linear-space recovery of one LCS alignment.
void hirschberg(const std::uint32_t* a, std::size_t n, const std::uint32_t* b, std::size_t m, std::size_t offset,
                std::vector<bool>& out)
{
    if (n == 0 || m == 0) return;
    if (n == 1) {
        if (std::find(b, b + m, a[0]) != b + m) out[offset] = true;
        return;
    }
    const std::size_t mid = n / 2;
    std::vector<std::uint32_t> fwd, bwd;
    lcs_row(a, mid, b, m, false, fwd);
    lcs_row(a + mid, n - mid, b, m, true, bwd);
    std::size_t split = 0;
    std::uint32_t best = 0;
    for (std::size_t j = 0; j <= m; ++j) {
        const auto v = fwd[j] + bwd[m - j];
        if (v > best || j == 0) {
            best = v;
            split = j;
        }
    }
    hirschberg(a, mid, b, split, offset, out);
    hirschberg(a + mid, n - mid, b + split, m - split, offset + mid, out);
}

std::vector<bool> lcs_mask_ids(const Ids& a, const Ids& b)
{
    std::vector<bool> out(a.size(), false);
    std::size_t lo = 0;
    while (lo < a.size() && lo < b.size() && a[lo] == b[lo]) out[lo++] = true;
    std::size_t hi_a = a.size(), hi_b = b.size();
    while (hi_a > lo && hi_b > lo && a[hi_a - 1] == b[hi_b - 1]) {
        out[--hi_a] = true;
        --hi_b;
    }
    hirschberg(a.data() + lo, hi_a - lo, b.data() + lo, hi_b - lo, lo, out);
    return out;
}

}  // namespace

std::vector<bool> lcs_mask(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    Interner interner;
    const auto ia = interner.map(a);
    const auto ib = interner.map(b);
    return lcs_mask_ids(ia, ib);
}

void smooth_runs(std::vector<bool>& mask, std::size_t min_run)
{
    if (min_run <= 1 || mask.empty()) return;
    struct Run {
        bool bp;
        std::size_t len;
    };
    std::vector<Run> runs;
    for (bool b : mask) {
        if (runs.empty() || runs.back().bp != b) runs.push_back({b, 1});
        else ++runs.back().len;
    }
    while (runs.size() > 1) {
        std::size_t pick = runs.size();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].len >= min_run) continue;
            if (pick == runs.size() || runs[i].len < runs[pick].len ||
                (runs[i].len == runs[pick].len && runs[i].bp && !runs[pick].bp)) {
                pick = i;
            }
        }
        if (pick == runs.size()) break;
        runs[pick].bp = !runs[pick].bp;
        // Merge with equal-labelled neighbours.
        if (pick + 1 < runs.size() && runs[pick + 1].bp == runs[pick].bp) {
            runs[pick].len += runs[pick + 1].len;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(pick) + 1);
        }
        if (pick > 0 && runs[pick - 1].bp == runs[pick].bp) {
            runs[pick - 1].len += runs[pick].len;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }
    std::size_t i = 0;
    for (const auto& r : runs) {
        for (std::size_t j = 0; j < r.len; ++j) mask[i++] = r.bp;
    }
}

Segmentation baseline_segment(std::string_view doc, const std::vector<std::string>& neighbors, BaselineOptions options)
{
    if (neighbors.empty()) throw InvalidArgument("baseline segmentation needs at least one neighbour");
    if (!(options.m_frac > 0.0 && options.m_frac <= 1.0)) throw InvalidArgument("m_frac must lie in (0, 1]");

    const auto words = tokenize_words(doc);
    Interner interner;
    const auto ids = interner.map(words);
    std::vector<std::vector<std::string>> neighbor_words;
    neighbor_words.reserve(neighbors.size());
    for (const auto& n : neighbors) neighbor_words.push_back(tokenize_words(n));

    std::vector<std::size_t> votes(words.size(), 0);
    for (const auto& nw : neighbor_words) {
        const auto mask = lcs_mask_ids(ids, interner.map(nw));
        for (std::size_t i = 0; i < mask.size(); ++i) votes[i] += mask[i];
    }
    const auto needed = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.m_frac * static_cast<double>(neighbors.size()) - 1e-9)));
    std::vector<bool> mask(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) mask[i] = votes[i] >= needed;
    smooth_runs(mask, options.min_run);
    return Segmentation::from_mask(mask);
}

double BaselineClassifier::classify(std::string_view doc, const std::vector<std::string>& neighbors) const
{
    const auto seg = baseline_segment(doc, neighbors, options_);
    const auto n = seg.word_count();
    if (n == 0) return 0.0;
    std::size_t bp = 0;
    for (const auto& s : seg.spans) {
        if (s.label == SpanLabel::Boilerplate) bp += s.size();
    }
    return static_cast<double>(bp) / static_cast<double>(n);
}

// ---- LLM adapters ----------------------------------------------------------

namespace {

constexpr std::size_t kNeighborChars = 4000;

std::string numbered_words(const std::vector<std::string>& words)
{
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        out += std::to_string(i);
        out.push_back('\t');
        out += words[i];
        out.push_back('\n');
    }
    return out;
}

std::string neighbor_block(const std::vector<std::string>& neighbors)
{
    std::string out;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        out += "--- neighbour " + std::to_string(i + 1) + " ---\n";
        out += utf8::prefix(neighbors[i], kNeighborChars);
        out.push_back('\n');
    }
    return out;
}

}  // namespace

ChatRequest segment_request(std::string_view doc, const std::vector<std::string>& neighbors)
{
    const auto words = tokenize_words(doc);
    ChatRequest req;
    req.json_output = true;
    req.messages.push_back({"user", render_template(embedded::segment_prompt_v1,
                                                    {{"word_count", std::to_string(words.size())},
                                                     {"words", numbered_words(words)},
                                                     {"neighbors", neighbor_block(neighbors)}})});
    return req;
}

ChatRequest classify_request(std::string_view doc, const std::vector<std::string>& neighbors)
{
    ChatRequest req;
    req.json_output = true;
    req.messages.push_back({"user", render_template(embedded::classify_prompt_v1,
                                                    {{"document", std::string(doc)},
                                                     {"neighbors", neighbor_block(neighbors)}})});
    return req;
}

Segmentation parse_segment_reply(std::string_view reply, std::size_t word_count)
{
    try {
        const auto j = nlohmann::json::parse(strip_to_json_object(reply));
        auto seg = spans_from_json(j.at("spans"), {});
        // Models may split a run in two; only coverage must be exact.
        std::size_t cursor = 0;
        for (const auto& s : seg.spans) {
            if (s.start != cursor || s.end <= s.start) throw SegmentationMismatch("spans overlap or leave gaps");
            cursor = s.end;
        }
        if (cursor != word_count) throw SegmentationMismatch("spans do not cover the document");
        return Segmentation::from_mask(seg.mask());
    } catch (const UnparseableResponse&) {
        throw;
    } catch (const std::exception& e) {
        throw UnparseableResponse(std::string("segmentation reply: ") + e.what(), std::string(reply));
    }
}

double parse_classify_reply(std::string_view reply)
{
    double value = 0;
    try {
        const auto open = reply.find('{');
        if (open != std::string_view::npos) {
            value = nlohmann::json::parse(strip_to_json_object(reply)).at("likelihood").get<double>();
        } else {
            const auto j = nlohmann::json::parse(reply);
            value = j.is_string() ? std::stod(j.get<std::string>()) : j.get<double>();
        }
    } catch (const std::exception& e) {
        throw UnparseableResponse(std::string("classification reply: ") + e.what(), std::string(reply));
    }
    if (!(value >= 0.0 && value <= 1.0)) throw UnparseableResponse("likelihood outside [0, 1]", std::string(reply));
    return value;
}

Segmentation LlmSegmenter::segment(std::string_view doc, const std::vector<std::string>& neighbors) const
{
    const auto reply = model_->complete(segment_request(doc, neighbors));
    return parse_segment_reply(reply, tokenize_words(doc).size());
}

double LlmClassifier::classify(std::string_view doc, const std::vector<std::string>& neighbors) const
{
    return parse_classify_reply(model_->complete(classify_request(doc, neighbors)));
}

// ---- parts and swap --------------------------------------------------------

DocumentParts extract_parts(std::string_view doc, const Segmentation& seg)
{
    const auto words = tokenize_words(doc);
    if (seg.word_count() > words.size()) throw SegmentationMismatch("span bounds exceed the word count");
    seg.validate(words.size());
    DocumentParts parts;
    for (const auto& s : seg.spans) {
        auto text = join_words(words, s.start, s.end);
        if (s.label == SpanLabel::Boilerplate) parts.skeleton.push_back(std::move(text));
        else parts.contents.push_back(std::move(text));
        parts.order.push_back(s.label);
    }
    return parts;
}

std::vector<std::string> interleave(const DocumentParts& parts)
{
    std::vector<std::string> words;
    std::size_t b = 0, c = 0;
    for (auto label : parts.order) {
        const auto& piece = label == SpanLabel::Boilerplate ? parts.skeleton.at(b++) : parts.contents.at(c++);
        for (auto& w : tokenize_words(piece)) words.push_back(std::move(w));
    }
    return words;
}

std::string fill_slots(const DocumentParts& host, const std::vector<std::string>& contents)
{
    const auto slots = static_cast<std::size_t>(std::count(host.order.begin(), host.order.end(), SpanLabel::Content));
    std::string out;
    auto emit = [&out](const std::string& piece) {
        if (piece.empty()) return;
        if (!out.empty()) out.push_back(' ');
        out += piece;
    };
    std::size_t b = 0, slot = 0;
    for (auto label : host.order) {
        if (label == SpanLabel::Boilerplate) {
            emit(host.skeleton[b++]);
            continue;
        }
        if (slot + 1 < slots) {
            if (slot < contents.size()) emit(contents[slot]);
        } else {
            for (std::size_t i = slot; i < contents.size(); ++i) emit(contents[i]);
        }
        ++slot;
    }
    if (slots == 0) {
        for (const auto& c : contents) emit(c);
    }
    return out;
}

SwapResult swap_reconstruct(std::string_view doc_a, const Segmentation& seg_a, std::string_view doc_b,
                            const Segmentation& seg_b)
{
    const auto a = extract_parts(doc_a, seg_a);
    const auto b = extract_parts(doc_b, seg_b);
    return {fill_slots(a, b.contents), fill_slots(b, a.contents)};
}

// ---- metrics ---------------------------------------------------------------

std::size_t word_levenshtein(const std::vector<std::string>& x, const std::vector<std::string>& y)
{
    const auto& shorter = x.size() < y.size() ? x : y;
    const auto& longer = x.size() < y.size() ? y : x;
    std::vector<std::size_t> prev(shorter.size() + 1), cur(shorter.size() + 1);
    for (std::size_t j = 0; j <= shorter.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= longer.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= shorter.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (longer[i - 1] == shorter[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[shorter.size()];
}

double reconstruction_error(std::string_view x, std::string_view y)
{
    const auto wx = tokenize_words(x);
    const auto wy = tokenize_words(y);
    const auto denom = std::max(wx.size(), wy.size());
    if (denom == 0) return 0.0;
    return static_cast<double>(word_levenshtein(wx, wy)) / static_cast<double>(denom);
}

namespace {

std::pair<std::size_t, std::size_t> bp_overlap(const Segmentation& predicted, const Segmentation& truth)
{
    if (predicted.word_count() != truth.word_count()) {
        throw SegmentationMismatch("segmentations cover " + std::to_string(predicted.word_count()) + " and " +
                                   std::to_string(truth.word_count()) + " words");
    }
    const auto p = predicted.mask();
    const auto t = truth.mask();
    std::size_t both = 0, true_bp = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        true_bp += t[i];
        both += p[i] && t[i];
    }
    return {both, true_bp};
}

}  // namespace

double boilerplate_extraction_rate(const Segmentation& predicted, const Segmentation& truth)
{
    const auto [both, true_bp] = bp_overlap(predicted, truth);
    (void)true_bp;
    const auto n = truth.word_count();
    return n == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(n);
}

double boilerplate_recall(const Segmentation& predicted, const Segmentation& truth)
{
    const auto [both, true_bp] = bp_overlap(predicted, truth);
    return true_bp == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(true_bp);
}

// ---- swap evaluation -------------------------------------------------------

MeanStd mean_std(const std::vector<double>& values)
{
    if (values.empty()) return {};
    double sum = 0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::string format_mean_std(const MeanStd& v, int precision)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << v.mean << " ± " << v.std;
    return out.str();
}

SwapEvalReport run_swap_evaluation(const std::vector<DocumentPair>& pairs, const Segmenter& segmenter, std::size_t workers)
{
    std::vector<std::optional<SwapEvalResult>> results(pairs.size());
    std::vector<std::string> errors(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t i) {
        const auto& p = pairs[i];
        try {
            auto seg_a = segmenter.segment(p.text_a, {p.text_b});
            auto seg_b = segmenter.segment(p.text_b, {p.text_a});
            seg_a.ada = p.ada_a;
            seg_b.ada = p.ada_b;
            const auto swapped = swap_reconstruct(p.text_a, seg_a, p.text_b, seg_b);
            const auto words_a = tokenize_words(p.text_a);
            const auto words_b = tokenize_words(p.text_b);
            const auto truth_a = p.truth_a ? *p.truth_a : Segmentation::from_mask(lcs_mask(words_a, words_b));
            const auto truth_b = p.truth_b ? *p.truth_b : Segmentation::from_mask(lcs_mask(words_b, words_a));
            SwapEvalResult r;
            r.pair_id = p.pair_id;
            r.re_ab = reconstruction_error(swapped.a_prime, p.text_b);
            r.re_ba = reconstruction_error(swapped.b_prime, p.text_a);
            r.ber_a = boilerplate_extraction_rate(seg_a, truth_a);
            r.ber_b = boilerplate_extraction_rate(seg_b, truth_b);
            r.ber_recall_a = boilerplate_recall(seg_a, truth_a);
            r.ber_recall_b = boilerplate_recall(seg_b, truth_b);
            results[i] = r;
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    }, 1);

    SwapEvalReport report;
    report.segmenter = segmenter.name();
    std::vector<double> ab, ba, both, ber, recall;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!results[i]) {
            report.failures.emplace_back(pairs[i].pair_id, errors[i]);
            continue;
        }
        const auto& r = *results[i];
        ab.push_back(r.re_ab);
        ba.push_back(r.re_ba);
        both.insert(both.end(), {r.re_ab, r.re_ba});
        ber.insert(ber.end(), {r.ber_a, r.ber_b});
        recall.insert(recall.end(), {r.ber_recall_a, r.ber_recall_b});
        report.pairs.push_back(r);
    }
    report.re_ab = mean_std(ab);
    report.re_ba = mean_std(ba);
    report.re = mean_std(both);
    report.ber = mean_std(ber);
    report.ber_recall = mean_std(recall);
    return report;
}

nlohmann::json to_json(const SwapEvalReport& report)
{
    auto ms = [](const MeanStd& v) { return nlohmann::json{{"mean", v.mean}, {"std", v.std}}; };
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& r : report.pairs) {
        pairs.push_back({{"pair_id", r.pair_id}, {"re_ab", r.re_ab}, {"re_ba", r.re_ba}, {"ber_a", r.ber_a},
                         {"ber_b", r.ber_b}, {"ber_recall_a", r.ber_recall_a}, {"ber_recall_b", r.ber_recall_b}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& [id, msg] : report.failures) failures.push_back({{"pair_id", id}, {"error", msg}});
    return {{"segmenter", report.segmenter}, {"evaluated", report.pairs.size()}, {"failed", report.failures.size()},
            {"re", ms(report.re)}, {"re_ab", ms(report.re_ab)}, {"re_ba", ms(report.re_ba)},
            {"ber", ms(report.ber)}, {"ber_recall", ms(report.ber_recall)}, {"pairs", pairs}, {"failures", failures}};
}

std::string render_table(const SwapEvalReport& report)
{
    const MeanStd ber_pct{report.ber.mean * 100.0, report.ber.std * 100.0};
    const MeanStd recall_pct{report.ber_recall.mean * 100.0, report.ber_recall.std * 100.0};
    std::ostringstream out;
    out << "Model | RE ↓ | BER (%) ↑\n";
    out << report.segmenter << " | " << format_mean_std(report.re) << " | " << format_mean_std(ber_pct, 2) << "\n";
    out << "\npairs evaluated: " << report.pairs.size() << ", failed: " << report.failures.size() << "\n";
    out << "RE A'→B: " << format_mean_std(report.re_ab) << ", RE B'→A: " << format_mean_std(report.re_ba) << "\n";
    out << "BER over true boilerplate (%): " << format_mean_std(recall_pct, 2) << "\n";
    return out.str();
}

std::vector<DocumentPair> read_pair_file(const std::filesystem::path& path,
                                         const std::function<std::string(const std::string&)>& load_text)
{
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open pair file " + path.string());
    std::vector<DocumentPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            DocumentPair p;
            const auto& id = j.at("pair_id");
            p.pair_id = id.is_string() ? id.get<std::string>() : id.dump();
            p.ada_a = j.at("ada_a").get<std::string>();
            p.ada_b = j.at("ada_b").get<std::string>();
            p.text_a = load_text(p.ada_a);
            p.text_b = load_text(p.ada_b);
            pairs.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw CorruptRecord(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

// ---- prevalence ------------------------------------------------------------

PrevalenceReport prevalence_study(const VectorStoreF& store, const std::function<std::string(const std::string&)>& load_text,
                                  const std::vector<std::size_t>& k_list, const Classifier& classifier,
                                  PrevalenceOptions options)
{
    PrevalenceReport report;
    for (const auto k : k_list) {
        const auto clusters = kmeans(store, static_cast<int>(k), options.seed);
        PrevalenceResult res;
        res.k = k;
        res.clusters = k;
        for (int c = 0; c < static_cast<int>(k); ++c) {
            const auto members = clusters.members(c);
            CentroidVerdict row{k, c, {}, members.size(), 0.0, false, {}};
            if (members.empty()) {
                row.error = "empty cluster";
                ++res.failures;
                report.rows.push_back(std::move(row));
                continue;
            }
            try {
                row.ada = centroid_document(clusters, c, store);
                std::vector<std::string> neighbor_texts;
                for (const auto& n : neighbors_of(store, row.ada, options.n_neighbors)) neighbor_texts.push_back(load_text(n.ada));
                row.likelihood = classifier.classify(load_text(row.ada), neighbor_texts);
                row.boilerplate = row.likelihood >= options.threshold;
                ++res.classified;
                res.boilerplate += row.boilerplate;
            } catch (const Error& e) {
                row.error = e.what();
                ++res.failures;
            }
            report.rows.push_back(std::move(row));
        }
        res.rate = res.classified == 0 ? 0.0 : static_cast<double>(res.boilerplate) / static_cast<double>(res.classified);
        report.per_k.push_back(res);
    }
    return report;
}

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

void write_prevalence_csv(const PrevalenceReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "k,cluster,ada,cluster_size,likelihood,boilerplate,error\n";
    for (const auto& r : report.rows) {
        out << r.k << ',' << r.cluster << ',' << csv_field(r.ada) << ',' << r.cluster_size << ',' << r.likelihood << ','
            << (r.boilerplate ? 1 : 0) << ',' << csv_field(r.error) << '\n';
    }
}

nlohmann::json to_json(const PrevalenceReport& report)
{
    nlohmann::json per_k = nlohmann::json::array();
    for (const auto& r : report.per_k) {
        per_k.push_back({{"k", r.k}, {"clusters", r.clusters}, {"classified", r.classified}, {"failures", r.failures},
                         {"boilerplate", r.boilerplate}, {"rate", r.rate}});
    }
    return {{"per_k", per_k}};
}

// ---- synthetic template pairs ----------------------------------------------

namespace {

constexpr char32_t kLower[] = U"αβγδεζηθικλμνξοπρστυφχψω";
constexpr char32_t kUpper[] = U"ΑΒΓΔΕΖΗΘΙΚΛΜΝΞΟΠΡΣΤΥΦΧΨΩ";

std::string random_word(SplitMix64& rng, const char32_t* alphabet, std::size_t size)
{
    std::u32string w;
    const auto len = 3 + rng.below(6);
    for (std::uint64_t i = 0; i < len; ++i) w.push_back(alphabet[rng.below(size)]);
    return utf8::encode(w);
}

std::vector<std::string> random_segment(SplitMix64& rng, bool skeleton, std::uint64_t tag)
{
    std::vector<std::string> words;
    const auto len = 3 + rng.below(10);
    for (std::uint64_t i = 0; i < len; ++i) {
        if (skeleton) words.push_back(random_word(rng, kLower, 24));
        else words.push_back(random_word(rng, kUpper, 24) + std::to_string(tag) + "." + std::to_string(i));
    }
    return words;
}

}  // namespace

std::vector<TemplatePair> generate_template_pairs(std::size_t n, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    std::vector<TemplatePair> out;
    out.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        // Layout alternates labels; skeleton and contents never share words.
        const auto n_spans = 2 + rng.below(6);
        const bool lead_bp = rng.below(2) == 0;
        std::vector<std::vector<std::string>> skeleton;
        std::vector<SpanLabel> order;
        for (std::uint64_t s = 0; s < n_spans; ++s) {
            const bool bp = (s % 2 == 0) == lead_bp;
            order.push_back(bp ? SpanLabel::Boilerplate : SpanLabel::Content);
            if (bp) skeleton.push_back(random_segment(rng, true, 0));
        }
        auto build = [&](std::uint64_t tag, std::string& text, std::vector<bool>& mask) {
            std::size_t b = 0;
            std::vector<std::string> words;
            for (auto label : order) {
                const auto seg = label == SpanLabel::Boilerplate ? skeleton[b++] : random_segment(rng, false, tag);
                for (const auto& w : seg) {
                    words.push_back(w);
                    mask.push_back(label == SpanLabel::Boilerplate);
                }
            }
            text = join_words(words, 0, words.size());
        };
        TemplatePair tp;
        tp.pair.pair_id = std::to_string(p);
        std::vector<bool> mask_a, mask_b;
        build(2 * p + 1, tp.pair.text_a, mask_a);
        build(2 * p + 2, tp.pair.text_b, mask_b);
        tp.pair.truth_a = Segmentation::from_mask(mask_a);
        tp.pair.truth_b = Segmentation::from_mask(mask_b);
        auto fraction = [](const std::vector<bool>& m) {
            return static_cast<double>(std::count(m.begin(), m.end(), true)) / static_cast<double>(m.size());
        };
        tp.boilerplate_fraction_a = fraction(mask_a);
        tp.boilerplate_fraction_b = fraction(mask_b);
        out.push_back(std::move(tp));
    }
    return out;
}

}  // namespace diavgeia
