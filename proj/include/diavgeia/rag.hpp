#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "diavgeia/clock.hpp"
#include "diavgeia/errors.hpp"
#include "diavgeia/llm.hpp"
#include "diavgeia/search_index.hpp"

namespace httplib {
class Server;
}

namespace diavgeia {

class RetrievalFailed : public Error {
  public:
    using Error::Error;
};
class GenerationFailed : public Error {
  public:
    using Error::Error;
};
class StoreUnavailable : public Error {
  public:
    using Error::Error;
};

enum class Role { User, Assistant };

struct ChatTurn {
    Role role = Role::User;
    std::string text;
    std::vector<std::string> cited_adas;
    std::int64_t timestamp = 0;  // Unix ms
    std::string detail;          // detailed explanation of a structured answer
    std::string error;           // set on an assistant turn that failed

    bool operator==(const ChatTurn&) const = default;
};

struct ChatSession {
    std::string session_id;
    std::vector<ChatTurn> turns;

    bool operator==(const ChatSession&) const = default;
};

nlohmann::json to_json(const ChatSession& session);
ChatSession session_from_json(const nlohmann::json& j);

struct StructuredAnswer {
    std::string concise_answer;
    std::string detailed_explanation;
    std::vector<std::string> citations;
};

nlohmann::json to_json(const StructuredAnswer& answer);
/// Validates the schema; throws UnparseableResponse on any violation.
StructuredAnswer parse_structured_answer(std::string_view raw);

/// All ADA codes in `text`, de-duplicated, in order of first appearance.
std::vector<std::string> extract_ada_citations(std::string_view text);

// ---- retrieval -------------------------------------------------------------

struct EvidenceDoc {
    std::string ada;
    double score = 0;
    std::string header;
    std::string body;
};

class Retriever {
  public:
    virtual ~Retriever() = default;
    virtual std::vector<EvidenceDoc> retrieve(std::string_view query, std::size_t k) const = 0;
};

class IndexRetriever final : public Retriever {
  public:
    explicit IndexRetriever(const SearchIndex& index) : index_(index) {}
    std::vector<EvidenceDoc> retrieve(std::string_view query, std::size_t k) const override;

  private:
    const SearchIndex& index_;
};

/// Question followed by the texts of up to `max_turns` most recent turns.
std::string build_retrieval_query(const ChatSession& session, std::string_view question, std::size_t max_turns = 5);

/// "[ADA: X]\n<header>\n<body prefix>" blocks separated by blank lines. The
/// budget counts body characters (code points).
std::string assemble_evidence(const std::vector<EvidenceDoc>& hits, std::size_t per_hit_chars = 2000,
                              std::size_t total_budget_chars = 16000);

// ---- prompting -------------------------------------------------------------

struct Prompt {
    std::string system;
    std::vector<ChatTurn> history;
    std::string evidence;
    std::string question;
};

std::string_view system_prompt() noexcept;
Prompt build_prompt(const ChatSession& session, std::string evidence, std::string question, std::size_t history_turns = 5);
/// Plain-text rendering with the four sections in order.
std::string render_prompt(const Prompt& prompt);
/// System message, history as alternating messages, then evidence and question.
ChatRequest to_chat_request(const Prompt& prompt, int max_output_tokens, bool structured);

/// Generation backend. Implementations are thread-safe.
class Generator {
  public:
    virtual ~Generator() = default;
    virtual std::string name() const = 0;
    /// Streams deltas to `sink`, returns the full text.
    virtual std::string generate(const Prompt& prompt, const DeltaSink& sink) const = 0;
    /// Raw JSON expected to match the structured-answer schema.
    virtual std::string generate_structured(const Prompt& prompt) const = 0;
    virtual int max_output_tokens() const noexcept { return 1500; }
};

/// First `n` whitespace-delimited words of `text`.
std::string truncate_words(std::string_view text, std::size_t n);

/// Cites the first evidence ADA. Deterministic, no network.
class EchoGenerator final : public Generator {
  public:
    explicit EchoGenerator(int max_output_tokens = 1500) : max_tokens_(max_output_tokens) {}
    std::string name() const override { return "echo"; }
    std::string generate(const Prompt& prompt, const DeltaSink& sink) const override;
    std::string generate_structured(const Prompt& prompt) const override;
    int max_output_tokens() const noexcept override { return max_tokens_; }

  private:
    int max_tokens_;
};

/// Fixed answers keyed by question; unknown questions get `fallback`.
class ScriptedGenerator final : public Generator {
  public:
    ScriptedGenerator(std::map<std::string, std::string> answers, std::string fallback = {})
        : answers_(std::move(answers)), fallback_(std::move(fallback))
    {}
    std::string name() const override { return "scripted"; }
    std::string generate(const Prompt& prompt, const DeltaSink& sink) const override;
    std::string generate_structured(const Prompt& prompt) const override;

  private:
    std::map<std::string, std::string> answers_;
    std::string fallback_;
};

class ChatModelGenerator final : public Generator {
  public:
    explicit ChatModelGenerator(std::shared_ptr<const ChatModel> model, int max_output_tokens = 1500)
        : model_(std::move(model)), max_tokens_(max_output_tokens)
    {}
    std::string name() const override { return "chat:" + model_->model(); }
    std::string generate(const Prompt& prompt, const DeltaSink& sink) const override;
    std::string generate_structured(const Prompt& prompt) const override;
    int max_output_tokens() const noexcept override { return max_tokens_; }

  private:
    std::shared_ptr<const ChatModel> model_;
    int max_tokens_;
};

// ---- sessions --------------------------------------------------------------

std::string deflate_bytes(std::string_view raw);
std::string inflate_bytes(std::string_view compressed);
/// 32 hex characters from the system CSPRNG.
std::string new_session_id();

class SessionStore {
  public:
    virtual ~SessionStore() = default;
    /// Throws NotFound for unknown ids.
    virtual ChatSession load(const std::string& session_id) const = 0;
    virtual void save(const ChatSession& session) = 0;
    virtual bool exists(const std::string& session_id) const = 0;
};

/// One deflate-compressed JSON file per session.
class FileSessionStore final : public SessionStore {
  public:
    explicit FileSessionStore(std::filesystem::path dir);
    ChatSession load(const std::string& session_id) const override;
    void save(const ChatSession& session) override;
    bool exists(const std::string& session_id) const override;
    std::filesystem::path path_of(const std::string& session_id) const;

  private:
    std::filesystem::path dir_;
};

/// Remote key-value adapter: `GET|PUT <base>/kv/<id>` with compressed bodies.
class HttpKvSessionStore final : public SessionStore {
  public:
    explicit HttpKvSessionStore(std::string base_url, int timeout_seconds = 10);
    ChatSession load(const std::string& session_id) const override;
    void save(const ChatSession& session) override;
    bool exists(const std::string& session_id) const override;

  private:
    std::string base_url_;
    int timeout_;
};

// ---- service ---------------------------------------------------------------

enum class AnswerMode { Streaming, Structured };

struct RagOptions {
    std::size_t k = 8;
    std::size_t history_turns = 5;
    std::size_t per_hit_chars = 2000;
    std::size_t total_budget_chars = 16000;
    std::size_t generator_concurrency = 4;
};

struct Answer {
    std::string text;
    std::optional<StructuredAnswer> structured;
    std::vector<std::string> cited_adas;
    std::vector<std::string> evidence_adas;
    /// Cited codes that were not in the evidence.
    std::vector<std::string> unsupported_citations;
    std::string retrieval_query;
    bool no_evidence = false;
};

nlohmann::json to_json(const Answer& answer);

inline constexpr std::string_view kNoEvidenceAnswer =
    "Δεν βρέθηκαν σχετικές αποφάσεις στη Διαύγεια για αυτή την ερώτηση.";

class RagService {
  public:
    RagService(const Retriever& retriever, const Generator& generator, SessionStore& store, RagOptions options = {},
               Clock* clock = nullptr);

    ChatSession create_session();
    ChatSession session(const std::string& session_id) const;
    /// Runs the whole pipeline and persists both turns before returning.
    Answer ask(const std::string& session_id, const std::string& question, AnswerMode mode = AnswerMode::Streaming,
               const DeltaSink& sink = {});

    const RagOptions& options() const noexcept { return options_; }

  private:
    std::shared_ptr<std::mutex> session_lock(const std::string& session_id);

    const Retriever& retriever_;
    const Generator& generator_;
    SessionStore& store_;
    RagOptions options_;
    SystemClock system_clock_;
    Clock& clock_;
    std::mutex locks_mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
    std::counting_semaphore<> generator_slots_;
};

/// Registers `/sessions`, `/sessions/{id}/messages`, `/sessions/{id}` and
/// `/healthz` on `server`.
void mount_http_api(httplib::Server& server, RagService& service);

/// Text of the events in a `text/event-stream` body, for clients and tests.
struct SseEvent {
    std::string event;
    std::string data;
};
std::vector<SseEvent> parse_sse(std::string_view body);

}  // namespace diavgeia
