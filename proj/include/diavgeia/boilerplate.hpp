#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "diavgeia/embedding.hpp"
#include "diavgeia/errors.hpp"
#include "diavgeia/llm.hpp"

namespace diavgeia {

class SegmentationMismatch : public Error {
  public:
    using Error::Error;
};

enum class SpanLabel { Boilerplate, Content };

struct Span {
    SpanLabel label;
    std::size_t start;
    std::size_t end;

    std::size_t size() const noexcept { return end - start; }
    bool operator==(const Span&) const = default;
};

/// Labeled maximal runs partitioning a document's words.
struct Segmentation {
    std::string ada;
    std::vector<Span> spans;

    std::size_t word_count() const noexcept { return spans.empty() ? 0 : spans.back().end; }
    /// Per-word labels, true = boilerplate.
    std::vector<bool> mask() const;
    /// Throws SegmentationMismatch unless the spans partition [0, n) into maximal runs.
    void validate(std::size_t n) const;

    static Segmentation from_mask(const std::vector<bool>& boilerplate, std::string ada = {});

    bool operator==(const Segmentation&) const = default;
};

nlohmann::json to_json(const Segmentation& seg);
Segmentation segmentation_from_json(const nlohmann::json& j);

std::vector<std::string> tokenize_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words, std::size_t begin, std::size_t end);

class Segmenter {
  public:
    virtual ~Segmenter() = default;
    virtual Segmentation segment(std::string_view doc, const std::vector<std::string>& neighbors) const = 0;
    virtual std::string name() const = 0;
};

class Classifier {
  public:
    virtual ~Classifier() = default;
    /// Likelihood in [0, 1] that `doc` comes from a reusable template.
    virtual double classify(std::string_view doc, const std::vector<std::string>& neighbors) const = 0;
    virtual std::string name() const = 0;
};

struct BaselineOptions {
    double m_frac = 0.5;
    std::size_t min_run = 3;
};

/// Per word of `a`: does it lie on the chosen LCS alignment with `b`?
std::vector<bool> lcs_mask(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Flips runs shorter than `min_run`, shortest first, until none remain.
void smooth_runs(std::vector<bool>& mask, std::size_t min_run);

Segmentation baseline_segment(std::string_view doc, const std::vector<std::string>& neighbors,
                              BaselineOptions options = {});

class BaselineSegmenter final : public Segmenter {
  public:
    explicit BaselineSegmenter(BaselineOptions options = {}) : options_(options) {}
    Segmentation segment(std::string_view doc, const std::vector<std::string>& neighbors) const override
    {
        return baseline_segment(doc, neighbors, options_);
    }
    std::string name() const override { return "baseline"; }

  private:
    BaselineOptions options_;
};

/// Likelihood = fraction of words the baseline labels as boilerplate.
class BaselineClassifier final : public Classifier {
  public:
    explicit BaselineClassifier(BaselineOptions options = {}) : options_(options) {}
    double classify(std::string_view doc, const std::vector<std::string>& neighbors) const override;
    std::string name() const override { return "baseline"; }

  private:
    BaselineOptions options_;
};

/// Prompts a chat model with the versioned segmentation template. The reply
/// must be `{"spans":[{"label":"BP"|"CT","start":…,"end":…}]}`.
class LlmSegmenter final : public Segmenter {
  public:
    explicit LlmSegmenter(std::shared_ptr<const ChatModel> model) : model_(std::move(model)) {}
    Segmentation segment(std::string_view doc, const std::vector<std::string>& neighbors) const override;
    std::string name() const override { return "llm:" + model_->model(); }

  private:
    std::shared_ptr<const ChatModel> model_;
};

class LlmClassifier final : public Classifier {
  public:
    explicit LlmClassifier(std::shared_ptr<const ChatModel> model) : model_(std::move(model)) {}
    double classify(std::string_view doc, const std::vector<std::string>& neighbors) const override;
    std::string name() const override { return "llm:" + model_->model(); }

  private:
    std::shared_ptr<const ChatModel> model_;
};

ChatRequest segment_request(std::string_view doc, const std::vector<std::string>& neighbors);
ChatRequest classify_request(std::string_view doc, const std::vector<std::string>& neighbors);
Segmentation parse_segment_reply(std::string_view reply, std::size_t word_count);
double parse_classify_reply(std::string_view reply);

struct DocumentParts {
    std::vector<std::string> skeleton;
    std::vector<std::string> contents;
    /// Layout of the original: labels in order, one per span.
    std::vector<SpanLabel> order;
};

DocumentParts extract_parts(std::string_view doc, const Segmentation& seg);
/// Inverse of extract_parts on word sequences.
std::vector<std::string> interleave(const DocumentParts& parts);

struct SwapResult {
    std::string a_prime;
    std::string b_prime;
};

/// A' is A's skeleton with B's contents in A's content slots, B' likewise.
SwapResult swap_reconstruct(std::string_view doc_a, const Segmentation& seg_a, std::string_view doc_b,
                            const Segmentation& seg_b);
std::string fill_slots(const DocumentParts& host, const std::vector<std::string>& contents);

std::size_t word_levenshtein(const std::vector<std::string>& x, const std::vector<std::string>& y);
double reconstruction_error(std::string_view x, std::string_view y);

/// Correct boilerplate words over all words.
double boilerplate_extraction_rate(const Segmentation& predicted, const Segmentation& truth);
/// Correct boilerplate words over true boilerplate words.
double boilerplate_recall(const Segmentation& predicted, const Segmentation& truth);

struct DocumentPair {
    std::string pair_id;
    std::string ada_a;
    std::string ada_b;
    std::string text_a;
    std::string text_b;
    std::optional<Segmentation> truth_a;
    std::optional<Segmentation> truth_b;
};

struct SwapEvalResult {
    std::string pair_id;
    double re_ab = 0;
    double re_ba = 0;
    double ber_a = 0;
    double ber_b = 0;
    double ber_recall_a = 0;
    double ber_recall_b = 0;
};

struct MeanStd {
    double mean = 0;
    double std = 0;
};

struct SwapEvalReport {
    std::string segmenter;
    std::vector<SwapEvalResult> pairs;
    std::vector<std::pair<std::string, std::string>> failures;  // pair id, message
    MeanStd re_ab;
    MeanStd re_ba;
    MeanStd re;  // both directions pooled
    MeanStd ber;
    MeanStd ber_recall;
};

MeanStd mean_std(const std::vector<double>& values);
/// "0.0097 ± 0.0370"
std::string format_mean_std(const MeanStd& v, int precision = 4);

SwapEvalReport run_swap_evaluation(const std::vector<DocumentPair>& pairs, const Segmenter& segmenter,
                                   std::size_t workers = 1);

nlohmann::json to_json(const SwapEvalReport& report);
std::string render_table(const SwapEvalReport& report);

/// `{"pair_id":…, "ada_a":…, "ada_b":…}` per line; texts filled by `load_text`.
std::vector<DocumentPair> read_pair_file(const std::filesystem::path& path,
                                         const std::function<std::string(const std::string&)>& load_text);

struct CentroidVerdict {
    std::size_t k;
    int cluster;
    std::string ada;
    std::size_t cluster_size;
    double likelihood;
    bool boilerplate;
    std::string error;
};

struct PrevalenceResult {
    std::size_t k = 0;
    std::size_t clusters = 0;
    std::size_t classified = 0;
    std::size_t failures = 0;
    std::size_t boilerplate = 0;
    double rate = 0;
};

struct PrevalenceReport {
    std::vector<PrevalenceResult> per_k;
    std::vector<CentroidVerdict> rows;
};

struct PrevalenceOptions {
    std::size_t n_neighbors = 5;
    double threshold = 0.5;
    std::uint64_t seed = 42;
};

PrevalenceReport prevalence_study(const VectorStoreF& store, const std::function<std::string(const std::string&)>& load_text,
                                  const std::vector<std::size_t>& k_list, const Classifier& classifier,
                                  PrevalenceOptions options = {});

void write_prevalence_csv(const PrevalenceReport& report, const std::filesystem::path& path);
nlohmann::json to_json(const PrevalenceReport& report);

/// Synthetic documents built by interleaving one skeleton with per-document contents.
struct TemplatePair {
    DocumentPair pair;
    double boilerplate_fraction_a;
    double boilerplate_fraction_b;
};

std::vector<TemplatePair> generate_template_pairs(std::size_t n, std::uint64_t seed);

}  // namespace diavgeia
