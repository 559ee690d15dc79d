#include "diavgeia/harvester.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "diavgeia/hashing.hpp"
#include "diavgeia/http.hpp"
#include "diavgeia/parallel.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace fs = std::filesystem;

std::string default_api_base()
{
    if (const char* env = std::getenv("DIAVGEIA_API_BASE"); env && *env) return env;
    return "https://diavgeia.gov.gr/opendata";
}

namespace {

bool is_date(const std::string& s)
{
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    const int month = std::stoi(s.substr(5, 2));
    const int day = std::stoi(s.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

std::string error_class(const std::exception& e)
{
    if (dynamic_cast<const RateLimited*>(&e)) return "RateLimited";
    if (dynamic_cast<const HttpError*>(&e)) return "HttpError";
    if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
    if (dynamic_cast<const NotFound*>(&e)) return "NotFound";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const CorruptRecord*>(&e)) return "CorruptRecord";
    if (dynamic_cast<const ExtractionFailed*>(&e)) return "ExtractionFailed";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    return "Error";
}

bool retriable(const std::exception& e)
{
    if (dynamic_cast<const RateLimited*>(&e) || dynamic_cast<const TransportError*>(&e)) return true;
    if (const auto* h = dynamic_cast<const HttpError*>(&e)) return h->status() >= 500;
    return false;
}

/// Exponential backoff with multiplicative jitter in [1, 1.5).
class Retrier {
  public:
    Retrier(const HarvestJob& job, Clock& clock) : job_(job), clock_(clock), rng_(job.jitter_seed) {}

    template <typename Fn>
    auto run(Fn&& fn, int& attempts) -> decltype(fn())
    {
        for (attempts = 1;; ++attempts) {
            try {
                return fn();
            } catch (const Error& e) {
                if (!retriable(e) || attempts >= job_.max_attempts) throw;
            }
            double jitter;
            {
                std::lock_guard lock(mu_);
                jitter = 1.0 + 0.5 * rng_.uniform();
            }
            const double seconds = job_.backoff_seconds * std::ldexp(1.0, attempts - 1) * jitter;
            clock_.sleep_ns(static_cast<std::int64_t>(seconds * 1e9));
        }
    }

  private:
    const HarvestJob& job_;
    Clock& clock_;
    std::mutex mu_;
    SplitMix64 rng_;
};

nlohmann::json job_fingerprint(const HarvestJob& job)
{
    return {{"from", job.date_from}, {"to", job.date_to},
            {"organization", job.organization ? nlohmann::json(*job.organization) : nlohmann::json()},
            {"page_size", job.page_size}};
}

std::string substitute(std::string tmpl, std::string_view key, const std::string& value)
{
    for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
        tmpl.replace(pos, key.size(), value);
    }
    return tmpl;
}

std::string run_extractor(const std::string& command, const fs::path& input, std::string& tool)
{
    tool = command.substr(0, command.find(' '));
    const std::string quoted = "'" + input.string() + "'";
    std::string cmd = command.find("{input}") != std::string::npos ? substitute(command, "{input}", quoted)
                                                                    : command + " " + quoted;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw ExtractionFailed(tool, -1, "cannot start extractor '" + tool + "'");
    std::string out;
    char buf[8192];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int status = ::pclose(pipe);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) throw ExtractionFailed(tool, code, "extractor '" + tool + "' exited with status " + std::to_string(code));
    return out;
}

}  // namespace

void HarvestJob::validate() const
{
    if (!is_date(date_from) || !is_date(date_to)) throw InvalidArgument("dates must be YYYY-MM-DD");
    if (date_from > date_to) throw InvalidArgument("date_from is after date_to");
    if (page_size == 0) throw InvalidArgument("page_size must be positive");
    if (!(rate_limit > 0.0)) throw InvalidArgument("rate_limit must be positive");
    if (max_attempts < 1) throw InvalidArgument("max_attempts must be at least 1");
    if (concurrency == 0) throw InvalidArgument("concurrency must be at least 1");
}

// ---- checkpoint ------------------------------------------------------------

nlohmann::json to_json(const HarvestCheckpoint& cp, const HarvestJob& job)
{
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : cp.failures) {
        failures.push_back({{"ada", f.ada}, {"page", f.page}, {"error", f.error_class}, {"attempts", f.attempts},
                            {"message", f.message}});
    }
    return {{"job", job_fingerprint(job)}, {"last_completed_page", cp.last_completed_page},
            {"fetched_adas", cp.fetched_adas}, {"failures", failures}, {"complete", cp.complete}};
}

HarvestCheckpoint checkpoint_from_json(const nlohmann::json& j)
{
    try {
        HarvestCheckpoint cp;
        cp.last_completed_page = j.at("last_completed_page").get<int>();
        cp.fetched_adas = j.at("fetched_adas").get<std::size_t>();
        cp.complete = j.value("complete", false);
        for (const auto& f : j.at("failures")) {
            cp.failures.push_back({f.at("ada").get<std::string>(), f.at("page").get<int>(), f.at("error").get<std::string>(),
                                   f.at("attempts").get<int>(), f.value("message", std::string())});
        }
        return cp;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(std::string("checkpoint: ") + e.what());
    }
}

std::optional<HarvestCheckpoint> load_checkpoint(const HarvestJob& job)
{
    if (job.checkpoint_path.empty() || !fs::exists(job.checkpoint_path)) return std::nullopt;
    std::ifstream in(job.checkpoint_path);
    if (!in) throw IoError("cannot read checkpoint " + job.checkpoint_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord("checkpoint " + job.checkpoint_path.string() + ": " + e.what());
    }
    if (j.value("job", nlohmann::json()) != job_fingerprint(job)) {
        throw InvalidArgument("checkpoint " + job.checkpoint_path.string() + " belongs to a different harvest job");
    }
    return checkpoint_from_json(j);
}

void save_checkpoint(const HarvestCheckpoint& cp, const HarvestJob& job)
{
    if (job.checkpoint_path.empty()) return;
    const auto dir = job.checkpoint_path.parent_path();
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);
    auto tmp = job.checkpoint_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + tmp.string());
        out << to_json(cp, job).dump(2) << '\n';
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, job.checkpoint_path, ec);
    if (ec) throw IoError("cannot replace checkpoint: " + ec.message());
}

// ---- client ----------------------------------------------------------------

std::string search_target(const std::string& search_path, const HarvestJob& job, int page)
{
    std::string q = search_path + "?from_issue_date=" + percent_encode(job.date_from) +
                    "&to_issue_date=" + percent_encode(job.date_to);
    if (job.organization) q += "&org=" + percent_encode(*job.organization);
    q += "&page=" + std::to_string(page) + "&size=" + std::to_string(job.page_size);
    return q;
}

ApiClient::ApiClient(std::string base_url, Clock& clock, double rate_limit, ApiEndpoints endpoints, int timeout_seconds)
    : base_url_(std::move(base_url)), clock_(clock), bucket_(clock, rate_limit), endpoints_(std::move(endpoints)),
      timeout_(timeout_seconds)
{}

std::string ApiClient::resolve(const std::string& tmpl, const std::string& ada) const
{
    const auto filled = substitute(tmpl, "{ada}", percent_encode(ada));
    if (filled.rfind("http", 0) == 0) return filled;
    return http::BaseUrl::parse(base_url_).path(filled);
}

std::string ApiClient::get(const std::string& target, const std::string& what)
{
    http::BaseUrl base;
    std::string path;
    if (target.rfind("http", 0) == 0) {
        base = http::BaseUrl::parse(target);
        path = base.prefix.empty() ? "/" : base.prefix;
    } else {
        base = http::BaseUrl::parse(base_url_);
        path = target;
    }
    auto client = http::make_client(base, timeout_);
    bucket_.acquire();
    const auto res = client->Get(path);
    if (!res) throw TransportError(what + ": " + httplib::to_string(res.error()));
    if (res->status == 404) throw NotFound(what + ": not found");
    if (res->status == 429) throw RateLimited(what + ": rate limited");
    if (res->status / 100 != 2) throw HttpError(res->status, what + ": HTTP " + std::to_string(res->status));
    return res->body;
}

DecisionPage ApiClient::fetch_decision_page(const HarvestJob& job, int page)
{
    if (page < 0) throw InvalidArgument("page must be >= 0");
    const auto body = get(search_target(resolve(endpoints_.search, {}), job, page), "page " + std::to_string(page));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("page " + std::to_string(page) + " is not JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("decisions") || !j["decisions"].is_array()) {
        throw ParseError("page " + std::to_string(page) + " has no decisions array");
    }
    DecisionPage out;
    const auto& entries = j["decisions"];
    out.raw_count = entries.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        try {
            auto record = record_from_json(entries[i]);
            if (!validate_ada(record.ada)) {
                out.skipped.push_back({i, "invalid ADA '" + record.ada + "'"});
                continue;
            }
            out.records.push_back(std::move(record));
        } catch (const CorruptRecord& e) {
            out.skipped.push_back({i, e.what()});
        }
    }
    return out;
}

StoredDocument ApiClient::fetch_document_text(const std::string& ada)
{
    if (!validate_ada(ada)) throw InvalidArgument("invalid ADA '" + ada + "'");
    StoredDocument doc;
    const auto meta = get(resolve(endpoints_.decision, ada), "decision " + ada);
    try {
        doc.record = record_from_json(nlohmann::json::parse(meta));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("decision " + ada + " metadata is not JSON: " + e.what());
    }
    if (endpoints_.extractor_command.empty()) {
        doc.body_markdown = get(resolve(endpoints_.text, ada), "text of " + ada);
        doc.source = DocumentSource::PreextractedText;
        doc.extraction_tool = "preextracted";
    } else {
        const auto pdf = get(resolve(endpoints_.document, ada), "document " + ada);
        const auto tmp = fs::temp_directory_path() /
                         ("diavgeia-" + percent_encode(ada) + "-" +
                          std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".pdf");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + tmp.string());
            out << pdf;
        }
        std::string tool;
        try {
            doc.body_markdown = run_extractor(endpoints_.extractor_command, tmp, tool);
        } catch (...) {
            fs::remove(tmp);
            throw;
        }
        fs::remove(tmp);
        doc.source = DocumentSource::ApiJsonPlusPdf;
        doc.extraction_tool = tool;
    }
    if (!utf8::is_valid(doc.body_markdown)) throw ParseError("body of " + ada + " is not UTF-8");
    doc.stored_at = clock_.wall_ms();
    return doc;
}

// ---- harvest ---------------------------------------------------------------

HarvestReport run_harvest(const HarvestJob& job, ApiClient& client, const CorpusLayout& layout, HarvestHooks hooks)
{
    job.validate();
    HarvestReport report;
    auto& cp = report.checkpoint;
    if (job.resume) {
        if (auto loaded = load_checkpoint(job)) cp = std::move(*loaded);
    }
    if (cp.complete) {
        report.complete = true;
        return report;
    }
    Retrier retrier(job, client.clock());

    for (int page = cp.last_completed_page + 1;; ++page) {
        DecisionPage dp;
        int attempts = 0;
        try {
            dp = retrier.run([&] { return client.fetch_decision_page(job, page); }, attempts);
        } catch (const Error& e) {
            // Unfinished page: leave the counter where it is so a resume retries it.
            cp.failures.push_back({"", page, error_class(e), attempts, e.what()});
            save_checkpoint(cp, job);
            return report;
        }
        ++report.pages_fetched;
        for (const auto& s : dp.skipped) {
            cp.failures.push_back({"", page, "MalformedEntry", 1, "entry " + std::to_string(s.index) + ": " + s.reason});
        }

        std::vector<std::optional<HarvestFailure>> item_failures(dp.records.size());
        std::vector<char> stored(dp.records.size(), 0);
        parallel_for(dp.records.size(), job.concurrency, [&](std::size_t i) {
            const auto& ada = dp.records[i].ada;
            int tries = 0;
            try {
                const auto doc = retrier.run([&] { return client.fetch_document_text(ada); }, tries);
                store_document(layout, doc);
                stored[i] = 1;
            } catch (const Error& e) {
                item_failures[i] = HarvestFailure{ada, page, error_class(e), tries, e.what()};
            }
        }, 1);
        for (std::size_t i = 0; i < dp.records.size(); ++i) {
            if (stored[i]) ++report.documents_stored;
            if (item_failures[i]) cp.failures.push_back(*item_failures[i]);
        }
        cp.last_completed_page = page;
        cp.fetched_adas += static_cast<std::size_t>(std::count(stored.begin(), stored.end(), 1));
        cp.complete = dp.raw_count < job.page_size;
        save_checkpoint(cp, job);

        if (cp.complete) {
            report.complete = true;
            return report;
        }
        if (hooks.should_stop && hooks.should_stop(page)) return report;
    }
}

// ---- stub server -----------------------------------------------------------

StubApi::StubApi(std::vector<StoredDocument> documents) : StubApi(std::move(documents), Options{}) {}

StubApi::StubApi(std::vector<StoredDocument> documents, Options options)
    : docs_(std::move(documents)), options_(std::move(options)), server_(std::make_unique<httplib::Server>())
{
    std::sort(docs_.begin(), docs_.end(), [](const auto& a, const auto& b) { return a.record.ada < b.record.ada; });

    auto find = [this](const std::string& ada) -> const StoredDocument* {
        const auto it = std::lower_bound(docs_.begin(), docs_.end(), ada,
                                         [](const StoredDocument& d, const std::string& a) { return d.record.ada < a; });
        return it != docs_.end() && it->record.ada == ada ? &*it : nullptr;
    };
    // Common prologue: log, then maybe answer with a scripted failure.
    auto intercept = [this](const httplib::Request& req, httplib::Response& res) {
        record(req.target);
        if (auto status = scripted(req.target)) {
            res.status = *status;
            res.set_content("{}", "application/json");
            return true;
        }
        return false;
    };

    server_->Get("/search", [this, intercept](const httplib::Request& req, httplib::Response& res) {
        if (intercept(req, res)) return;
        const auto from = req.get_param_value("from_issue_date");
        const auto to = req.get_param_value("to_issue_date");
        const auto org = req.get_param_value("org");
        const auto page = std::stoul(req.has_param("page") ? req.get_param_value("page") : "0");
        const auto size = std::stoul(req.has_param("size") ? req.get_param_value("size") : "100");
        std::vector<const StoredDocument*> matching;
        for (const auto& d : docs_) {
            const auto day = format_iso8601_utc(d.record.issue_date).substr(0, 10);
            if (day < from || day > to) continue;
            if (!org.empty() && d.record.organization_id != org) continue;
            matching.push_back(&d);
        }
        nlohmann::json decisions = nlohmann::json::array();
        for (std::size_t i = page * size; i < std::min(matching.size(), (page + 1) * size); ++i) {
            decisions.push_back(record_to_json(matching[i]->record));
        }
        if (page == 0) {
            for (const auto& bad : options_.malformed_entries) decisions.push_back(bad);
        }
        const nlohmann::json body = {{"info", {{"page", page}, {"size", size}, {"total", matching.size()}}},
                                     {"decisions", decisions}};
        res.set_content(body.dump(), "application/json");
    });
    server_->Get(R"(/decisions/([^/]+))", [intercept, find](const httplib::Request& req, httplib::Response& res) {
        if (intercept(req, res)) return;
        const auto* d = find(req.matches[1]);
        if (!d) {
            res.status = 404;
            return;
        }
        res.set_content(record_to_json(d->record).dump(), "application/json");
    });
    server_->Get(R"(/decisions/([^/]+)/text)", [intercept, find](const httplib::Request& req, httplib::Response& res) {
        if (intercept(req, res)) return;
        const auto* d = find(req.matches[1]);
        if (!d) {
            res.status = 404;
            return;
        }
        res.set_content(d->body_markdown, "text/plain; charset=utf-8");
    });
    // Stand-in PDF: a one-line header followed by the text.
    server_->Get(R"(/decisions/([^/]+)/document)", [intercept, find](const httplib::Request& req, httplib::Response& res) {
        if (intercept(req, res)) return;
        const auto* d = find(req.matches[1]);
        if (!d) {
            res.status = 404;
            return;
        }
        res.set_content("%PDF-1.4 stub\n" + d->body_markdown, "application/pdf");
    });

    port_ = server_->bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw IoError("stub API cannot bind a port");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

StubApi::~StubApi() { stop(); }

void StubApi::stop()
{
    if (thread_.joinable()) {
        server_->stop();
        thread_.join();
    }
}

std::string StubApi::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void StubApi::record(const std::string& target)
{
    std::lock_guard lock(mu_);
    log_.push_back(target);
}

std::optional<int> StubApi::scripted(const std::string& target)
{
    std::lock_guard lock(mu_);
    auto it = options_.scripted_failures.find(target);
    if (it == options_.scripted_failures.end() || it->second.empty()) return std::nullopt;
    const int status = it->second.front();
    it->second.erase(it->second.begin());
    return status;
}

void StubApi::script_failures(const std::string& target, std::vector<int> statuses)
{
    std::lock_guard lock(mu_);
    options_.scripted_failures[target] = std::move(statuses);
}

std::size_t StubApi::count(const std::string& target) const
{
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count(log_.begin(), log_.end(), target));
}

std::size_t StubApi::count_prefix(const std::string& prefix) const
{
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(log_.begin(), log_.end(), [&](const std::string& t) { return t.rfind(prefix, 0) == 0; }));
}

std::vector<std::string> StubApi::requests() const
{
    std::lock_guard lock(mu_);
    return log_;
}

}  // namespace diavgeia
