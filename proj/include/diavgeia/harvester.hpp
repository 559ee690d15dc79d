#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "diavgeia/clock.hpp"
#include "diavgeia/corpus.hpp"
#include "diavgeia/errors.hpp"

namespace httplib {
class Server;
}

namespace diavgeia {

class HttpError : public Error {
  public:
    HttpError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

  private:
    int status_;
};

/// HTTP 429; the caller must back off.
class RateLimited : public HttpError {
  public:
    explicit RateLimited(const std::string& what) : HttpError(429, what) {}
};

/// Connection-level failure (refused, timeout, reset).
class TransportError : public Error {
  public:
    using Error::Error;
};

class ParseError : public Error {
  public:
    using Error::Error;
};

class ExtractionFailed : public Error {
  public:
    ExtractionFailed(std::string tool, int exit_code, const std::string& what)
        : Error(what), tool_(std::move(tool)), exit_code_(exit_code)
    {}
    const std::string& tool() const noexcept { return tool_; }
    int exit_code() const noexcept { return exit_code_; }

  private:
    std::string tool_;
    int exit_code_;
};

/// `DIAVGEIA_API_BASE`, else the public OpenData root.
std::string default_api_base();

/// Paths relative to the API base; `{ada}` is substituted. A template that
/// starts with "http" is an absolute URL.
struct ApiEndpoints {
    std::string search = "/search";
    std::string decision = "/decisions/{ada}";
    std::string text = "/decisions/{ada}/text";
    std::string document = "/decisions/{ada}/document";
    /// When set, bodies come from running this command on the downloaded PDF
    /// instead of the text endpoint. `{input}` is replaced by the PDF path.
    std::string extractor_command;
};

struct HarvestJob {
    std::string date_from;  // YYYY-MM-DD, inclusive
    std::string date_to;
    std::optional<std::string> organization;
    std::size_t page_size = 100;
    double rate_limit = 2.0;  // requests per second
    std::filesystem::path checkpoint_path;
    std::size_t concurrency = 1;
    int max_attempts = 3;
    double backoff_seconds = 0.5;
    std::uint64_t jitter_seed = 1;
    bool resume = true;

    void validate() const;
};

struct HarvestFailure {
    std::string ada;  // empty for page-level failures
    int page = -1;
    std::string error_class;
    int attempts = 0;
    std::string message;

    bool operator==(const HarvestFailure&) const = default;
};

struct HarvestCheckpoint {
    int last_completed_page = -1;
    std::size_t fetched_adas = 0;
    std::vector<HarvestFailure> failures;
    bool complete = false;  // the final page has been processed

    bool operator==(const HarvestCheckpoint&) const = default;
};

nlohmann::json to_json(const HarvestCheckpoint& cp, const HarvestJob& job);
HarvestCheckpoint checkpoint_from_json(const nlohmann::json& j);
/// Throws InvalidArgument when the file belongs to a different job.
std::optional<HarvestCheckpoint> load_checkpoint(const HarvestJob& job);
void save_checkpoint(const HarvestCheckpoint& cp, const HarvestJob& job);

struct SkippedEntry {
    std::size_t index;
    std::string reason;
};

struct DecisionPage {
    std::vector<DecisionRecord> records;
    std::vector<SkippedEntry> skipped;
    std::size_t raw_count = 0;
};

/// Metadata pages and per-decision documents from the OpenData API. Every
/// request first takes a token from the shared bucket.
class ApiClient {
  public:
    ApiClient(std::string base_url, Clock& clock, double rate_limit, ApiEndpoints endpoints = {}, int timeout_seconds = 60);

    DecisionPage fetch_decision_page(const HarvestJob& job, int page);
    StoredDocument fetch_document_text(const std::string& ada);

    TokenBucket& bucket() noexcept { return bucket_; }
    Clock& clock() noexcept { return clock_; }

  private:
    std::string get(const std::string& path_or_url, const std::string& what);
    std::string resolve(const std::string& tmpl, const std::string& ada) const;

    std::string base_url_;
    Clock& clock_;
    TokenBucket bucket_;
    ApiEndpoints endpoints_;
    int timeout_;
};

struct HarvestReport {
    HarvestCheckpoint checkpoint;
    std::size_t pages_fetched = 0;
    std::size_t documents_stored = 0;
    bool complete = false;
};

struct HarvestHooks {
    /// Called after each page's checkpoint is saved; true stops the run.
    std::function<bool(int page)> should_stop;
};

HarvestReport run_harvest(const HarvestJob& job, ApiClient& client, const CorpusLayout& layout, HarvestHooks hooks = {});

/// In-process imitation of the OpenData API for tests and demos. Serves
/// `/search`, `/decisions/{ada}`, `/decisions/{ada}/text` and
/// `/decisions/{ada}/document`, and counts every request.
class StubApi {
  public:
    struct Options {
        /// Raw JSON entries appended to the first page of every search.
        std::vector<nlohmann::json> malformed_entries;
        /// Statuses returned, in order, before the real answer for a request
        /// target (path plus query string).
        std::map<std::string, std::vector<int>> scripted_failures;
    };

    explicit StubApi(std::vector<StoredDocument> documents);
    StubApi(std::vector<StoredDocument> documents, Options options);
    ~StubApi();
    StubApi(const StubApi&) = delete;
    StubApi& operator=(const StubApi&) = delete;

    std::string base_url() const;
    /// Requests whose target (path plus query) equals `target`.
    std::size_t count(const std::string& target) const;
    std::size_t count_prefix(const std::string& prefix) const;
    std::vector<std::string> requests() const;
    void script_failures(const std::string& target, std::vector<int> statuses);
    void stop();

  private:
    void record(const std::string& target);
    std::optional<int> scripted(const std::string& target);

    std::vector<StoredDocument> docs_;
    Options options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::vector<std::string> log_;
};

/// Canonical request target used by the stub and the client for a search page.
std::string search_target(const std::string& search_path, const HarvestJob& job, int page);

}  // namespace diavgeia
