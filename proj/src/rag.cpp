#include "diavgeia/rag.hpp"

#include <algorithm>

#include "diavgeia/analyzer.hpp"
#include "diavgeia/corpus.hpp"
#include "diavgeia/embedded/system_prompt_v1.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

// ---- JSON ------------------------------------------------------------------

nlohmann::json to_json(const ChatSession& session)
{
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : session.turns) {
        nlohmann::json j = {{"role", t.role == Role::User ? "user" : "assistant"},
                            {"text", t.text},
                            {"cited_adas", t.cited_adas},
                            {"timestamp", t.timestamp}};
        if (!t.detail.empty()) j["detail"] = t.detail;
        if (!t.error.empty()) j["error"] = t.error;
        turns.push_back(std::move(j));
    }
    return {{"session_id", session.session_id}, {"turns", turns}};
}

ChatSession session_from_json(const nlohmann::json& j)
{
    try {
        ChatSession s;
        s.session_id = j.at("session_id").get<std::string>();
        for (const auto& t : j.at("turns")) {
            ChatTurn turn;
            const auto role = t.at("role").get<std::string>();
            if (role == "user") turn.role = Role::User;
            else if (role == "assistant") turn.role = Role::Assistant;
            else throw CorruptRecord("unknown role '" + role + "'");
            turn.text = t.at("text").get<std::string>();
            turn.cited_adas = t.value("cited_adas", std::vector<std::string>{});
            turn.timestamp = t.value("timestamp", std::int64_t{0});
            turn.detail = t.value("detail", std::string());
            turn.error = t.value("error", std::string());
            s.turns.push_back(std::move(turn));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord(std::string("session: ") + e.what());
    }
}

nlohmann::json to_json(const StructuredAnswer& answer)
{
    return {{"concise_answer", answer.concise_answer},
            {"detailed_explanation", answer.detailed_explanation},
            {"citations", answer.citations}};
}

StructuredAnswer parse_structured_answer(std::string_view raw)
{
    StructuredAnswer out;
    try {
        const auto j = nlohmann::json::parse(strip_to_json_object(raw));
        out.concise_answer = j.at("concise_answer").get<std::string>();
        out.detailed_explanation = j.at("detailed_explanation").get<std::string>();
        out.citations = j.at("citations").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw UnparseableResponse(std::string("structured answer: ") + e.what(), std::string(raw));
    }
    for (const auto& c : out.citations) {
        if (!validate_ada(c)) throw UnparseableResponse("citation '" + c + "' is not an ADA", std::string(raw));
    }
    return out;
}

std::vector<std::string> extract_ada_citations(std::string_view text)
{
    const auto cps = utf8::decode(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!is_ada_char(cps[i])) {
            ++i;
            continue;
        }
        std::size_t head_end = i;
        while (head_end < cps.size() && is_ada_char(cps[head_end])) ++head_end;
        std::size_t tail_end = head_end + 1;
        if (head_end < cps.size() && cps[head_end] == U'-') {
            while (tail_end < cps.size() && is_ada_char(cps[tail_end])) ++tail_end;
            const auto candidate = utf8::encode(std::u32string_view(cps).substr(i, tail_end - i));
            if (validate_ada(candidate) && std::find(out.begin(), out.end(), candidate) == out.end()) {
                out.push_back(candidate);
            }
            i = tail_end;
        } else {
            i = head_end;
        }
    }
    return out;
}

// ---- retrieval -------------------------------------------------------------

std::vector<EvidenceDoc> IndexRetriever::retrieve(std::string_view query, std::size_t k) const
{
    std::vector<EvidenceDoc> out;
    for (const auto& hit : index_.search(query, k)) {
        const auto* doc = index_.find(hit.ada);
        out.push_back({hit.ada, hit.score, doc ? doc->header : std::string(), doc ? doc->body : std::string()});
    }
    return out;
}

std::string build_retrieval_query(const ChatSession& session, std::string_view question, std::size_t max_turns)
{
    std::string query(question);
    const auto& turns = session.turns;
    const auto first = turns.size() > max_turns ? turns.size() - max_turns : 0;
    for (std::size_t i = first; i < turns.size(); ++i) {
        if (turns[i].text.empty()) continue;
        if (!query.empty()) query.push_back(' ');
        query += turns[i].text;
    }
    return query;
}

std::string assemble_evidence(const std::vector<EvidenceDoc>& hits, std::size_t per_hit_chars, std::size_t total_budget_chars)
{
    std::string out;
    std::size_t used = 0;
    std::size_t blocks = 0;
    for (const auto& hit : hits) {
        const auto body = utf8::prefix(hit.body, per_hit_chars);
        const auto chars = utf8::length(body);
        if (blocks > 0 && used + chars > total_budget_chars) break;
        if (blocks > 0) out += "\n\n";
        out += "[ADA: " + hit.ada + "]\n" + hit.header + "\n";
        out.append(body);
        used += chars;
        ++blocks;
    }
    return out;
}

// ---- prompting -------------------------------------------------------------

std::string_view system_prompt() noexcept { return embedded::system_prompt_v1; }

Prompt build_prompt(const ChatSession& session, std::string evidence, std::string question, std::size_t history_turns)
{
    Prompt p;
    p.system = std::string(system_prompt());
    const auto& turns = session.turns;
    const auto first = turns.size() > history_turns ? turns.size() - history_turns : 0;
    p.history.assign(turns.begin() + static_cast<std::ptrdiff_t>(first), turns.end());
    p.evidence = std::move(evidence);
    p.question = std::move(question);
    return p;
}

namespace {

constexpr std::string_view kStructuredInstruction =
    "Reply with a single JSON object and nothing else: "
    R"({"concise_answer": "...", "detailed_explanation": "...", "citations": ["ADA", ...]})"
    " where citations lists the ADA codes of the evidence you used.";

std::string evidence_and_question(const Prompt& prompt)
{
    return "Evidence:\n" + prompt.evidence + "\n\nQuestion:\n" + prompt.question;
}

}  // namespace

std::string render_prompt(const Prompt& prompt)
{
    std::string out = "### System\n" + prompt.system;
    if (!out.empty() && out.back() != '\n') out.push_back('\n');
    out += "\n### History\n";
    for (const auto& t : prompt.history) {
        out += t.role == Role::User ? "User: " : "Assistant: ";
        out += t.text;
        out.push_back('\n');
    }
    out += "\n### Evidence\n" + prompt.evidence + "\n\n### Question\n" + prompt.question + "\n";
    return out;
}

ChatRequest to_chat_request(const Prompt& prompt, int max_output_tokens, bool structured)
{
    ChatRequest req;
    req.max_output_tokens = max_output_tokens;
    req.json_output = structured;
    req.messages.push_back({"system", prompt.system});
    for (const auto& t : prompt.history) {
        if (t.text.empty()) continue;
        req.messages.push_back({t.role == Role::User ? "user" : "assistant", t.text});
    }
    auto last = evidence_and_question(prompt);
    if (structured) last += "\n\n" + std::string(kStructuredInstruction);
    req.messages.push_back({"user", std::move(last)});
    return req;
}

// ---- generators ------------------------------------------------------------

std::string truncate_words(std::string_view text, std::size_t n)
{
    std::size_t words = 0;
    std::size_t pos = 0;
    bool in_word = false;
    while (pos < text.size()) {
        const std::size_t at = pos;
        const bool space = utf8::is_space(utf8::next(text, pos));
        if (!space && !in_word) {
            if (words == n) return std::string(text.substr(0, at));
            ++words;
        }
        in_word = !space;
    }
    return std::string(text);
}

namespace {

void stream_words(const std::string& text, const DeltaSink& sink)
{
    if (!sink) return;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find(' ', start);
        end = end == std::string::npos ? text.size() : end + 1;
        sink(std::string_view(text).substr(start, end - start));
        start = end;
    }
}

std::vector<std::string> evidence_adas(std::string_view evidence)
{
    std::vector<std::string> out;
    constexpr std::string_view tag = "[ADA: ";
    for (auto pos = evidence.find(tag); pos != std::string_view::npos; pos = evidence.find(tag, pos + 1)) {
        const auto start = pos + tag.size();
        const auto end = evidence.find(']', start);
        if (end == std::string_view::npos) break;
        out.emplace_back(evidence.substr(start, end - start));
    }
    return out;
}

}  // namespace

std::string EchoGenerator::generate(const Prompt& prompt, const DeltaSink& sink) const
{
    const auto adas = evidence_adas(prompt.evidence);
    std::string text = adas.empty() ? std::string(kNoEvidenceAnswer)
                                    : "Σύμφωνα με την απόφαση " + adas.front() + ": " + prompt.question;
    text = truncate_words(text, static_cast<std::size_t>(max_tokens_));
    stream_words(text, sink);
    return text;
}

std::string EchoGenerator::generate_structured(const Prompt& prompt) const
{
    const auto adas = evidence_adas(prompt.evidence);
    StructuredAnswer a;
    a.concise_answer = adas.empty() ? std::string(kNoEvidenceAnswer) : "Βλ. απόφαση " + adas.front() + ".";
    a.detailed_explanation = truncate_words(prompt.evidence, static_cast<std::size_t>(max_tokens_));
    if (!adas.empty()) a.citations.push_back(adas.front());
    return to_json(a).dump();
}

std::string ScriptedGenerator::generate(const Prompt& prompt, const DeltaSink& sink) const
{
    const auto it = answers_.find(prompt.question);
    auto text = truncate_words(it == answers_.end() ? fallback_ : it->second, static_cast<std::size_t>(max_output_tokens()));
    stream_words(text, sink);
    return text;
}

std::string ScriptedGenerator::generate_structured(const Prompt& prompt) const
{
    const auto text = generate(prompt, {});
    StructuredAnswer a{text, text, {}};
    const auto adas = evidence_adas(prompt.evidence);
    if (!adas.empty()) a.citations.push_back(adas.front());
    return to_json(a).dump();
}

std::string ChatModelGenerator::generate(const Prompt& prompt, const DeltaSink& sink) const
{
    return model_->stream(to_chat_request(prompt, max_tokens_, false), sink ? sink : [](std::string_view) {});
}

std::string ChatModelGenerator::generate_structured(const Prompt& prompt) const
{
    return model_->complete(to_chat_request(prompt, max_tokens_, true));
}

// ---- service ---------------------------------------------------------------

nlohmann::json to_json(const Answer& answer)
{
    nlohmann::json j = {{"answer", answer.text},
                        {"citations", answer.cited_adas},
                        {"evidence", answer.evidence_adas},
                        {"unsupported_citations", answer.unsupported_citations},
                        {"no_evidence", answer.no_evidence},
                        {"retrieval_query", answer.retrieval_query}};
    if (answer.structured) {
        j["concise_answer"] = answer.structured->concise_answer;
        j["detailed_explanation"] = answer.structured->detailed_explanation;
    }
    return j;
}

RagService::RagService(const Retriever& retriever, const Generator& generator, SessionStore& store, RagOptions options,
                       Clock* clock)
    : retriever_(retriever), generator_(generator), store_(store), options_(options),
      clock_(clock ? *clock : system_clock_),
      generator_slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.generator_concurrency)))
{
    if (options_.k == 0) throw InvalidArgument("k must be >= 1");
}

ChatSession RagService::create_session()
{
    ChatSession s;
    do {
        s.session_id = new_session_id();
    } while (store_.exists(s.session_id));
    store_.save(s);
    return s;
}

ChatSession RagService::session(const std::string& session_id) const { return store_.load(session_id); }

std::shared_ptr<std::mutex> RagService::session_lock(const std::string& session_id)
{
    std::lock_guard lock(locks_mu_);
    auto& m = locks_[session_id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
}

namespace {

struct SlotGuard {
    std::counting_semaphore<>& sem;
    explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
};

}  // namespace

Answer RagService::ask(const std::string& session_id, const std::string& question, AnswerMode mode, const DeltaSink& sink)
{
    const auto mu = session_lock(session_id);
    std::lock_guard lock(*mu);
    auto session = store_.load(session_id);

    ChatTurn user{Role::User, question, {}, clock_.wall_ms(), {}, {}};
    auto fail = [&](const std::string& message) {
        session.turns.push_back(user);
        session.turns.push_back({Role::Assistant, {}, {}, clock_.wall_ms(), {}, message});
        store_.save(session);
    };

    Answer answer;
    std::vector<EvidenceDoc> hits;
    if (!analyze_greek(question).empty()) {
        answer.retrieval_query = build_retrieval_query(session, question, options_.history_turns);
        try {
            hits = retriever_.retrieve(answer.retrieval_query, options_.k);
        } catch (const std::exception& e) {
            fail(std::string("retrieval failed: ") + e.what());
            throw RetrievalFailed(e.what());
        }
    }

    if (hits.empty()) {
        answer.no_evidence = true;
        answer.text = std::string(kNoEvidenceAnswer);
        if (mode == AnswerMode::Structured) answer.structured = StructuredAnswer{answer.text, {}, {}};
        if (sink) sink(answer.text);
    } else {
        const auto evidence = assemble_evidence(hits, options_.per_hit_chars, options_.total_budget_chars);
        answer.evidence_adas = evidence_adas(evidence);
        const auto prompt = build_prompt(session, evidence, question, options_.history_turns);
        try {
            SlotGuard slot(generator_slots_);
            if (mode == AnswerMode::Streaming) {
                answer.text = generator_.generate(prompt, sink);
                answer.cited_adas = extract_ada_citations(answer.text);
            } else {
                // One retry on schema violations.
                for (int attempt = 1;; ++attempt) {
                    try {
                        auto parsed = parse_structured_answer(generator_.generate_structured(prompt));
                        if (parsed.citations.empty()) {
                            throw UnparseableResponse("answer cites nothing although evidence was retrieved", {});
                        }
                        answer.structured = std::move(parsed);
                        break;
                    } catch (const UnparseableResponse&) {
                        if (attempt >= 2) throw;
                    }
                }
                answer.text = answer.structured->concise_answer;
                answer.cited_adas = answer.structured->citations;
            }
        } catch (const std::exception& e) {
            fail(std::string("generation failed: ") + e.what());
            throw GenerationFailed(e.what());
        }
        for (const auto& c : answer.cited_adas) {
            if (std::find(answer.evidence_adas.begin(), answer.evidence_adas.end(), c) == answer.evidence_adas.end()) {
                answer.unsupported_citations.push_back(c);
            }
        }
    }

    session.turns.push_back(user);
    ChatTurn reply{Role::Assistant, answer.text, answer.cited_adas, clock_.wall_ms(), {}, {}};
    if (answer.structured) reply.detail = answer.structured->detailed_explanation;
    session.turns.push_back(std::move(reply));
    store_.save(session);
    return answer;
}

}  // namespace diavgeia
