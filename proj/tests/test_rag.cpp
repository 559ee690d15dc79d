#include <doctest.h>

#include <atomic>
#include <thread>

#include "diavgeia/http.hpp"
#include "diavgeia/rag.hpp"
#include "diavgeia/utf8.hpp"
#include "support/generators.hpp"
#include "support/temp_dir.hpp"

using namespace diavgeia;
using diavgeia::testing::TempDir;

namespace {

ChatTurn turn(Role role, std::string text) { return {role, std::move(text), {}, 0, {}, {}}; }

struct Fixture {
    SearchIndex index;
    std::vector<std::string> adas;

    Fixture()
    {
        const char* bodies[] = {
            "Ανάληψη υποχρέωσης ύψους 381,22 € για κρατήσεις τραπεζών της ΔΕΥΑ Θήρας.",
            "Έγκριση δαπάνης για την προμήθεια καυσίμων του δήμου Αθηναίων.",
            "Πρόσληψη προσωπικού καθαριότητας με σύμβαση ορισμένου χρόνου.",
            "Ορισμός μελών επιτροπής διαγωνισμού για τη συντήρηση οδών.",
        };
        for (std::uint64_t i = 0; i < 4; ++i) {
            adas.push_back(testing::indexed_ada(i + 1));
            index.upsert(adas.back(), "ΑΔΑ: " + adas.back(), bodies[i]);
        }
    }
};

class ThrowingRetriever final : public Retriever {
  public:
    std::vector<EvidenceDoc> retrieve(std::string_view, std::size_t) const override { throw IoError("index offline"); }
};

class CountingGenerator final : public Generator {
  public:
    explicit CountingGenerator(std::vector<std::string> structured_replies) : replies_(std::move(structured_replies)) {}
    std::string name() const override { return "counting"; }
    std::string generate(const Prompt&, const DeltaSink&) const override
    {
        ++calls;
        throw RemoteError("upstream 500");
    }
    std::string generate_structured(const Prompt&) const override
    {
        const auto i = calls++;
        return replies_.at(std::min<std::size_t>(i, replies_.size() - 1));
    }
    mutable std::atomic<std::size_t> calls{0};

  private:
    std::vector<std::string> replies_;
};

}  // namespace

TEST_CASE("retrieval query keeps the last five turns")
{
    ChatSession s{"s", {}};
    for (int i = 1; i <= 7; ++i) s.turns.push_back(turn(i % 2 ? Role::User : Role::Assistant, "t" + std::to_string(i)));
    CHECK(build_retrieval_query(s, "ερώτηση") == "ερώτηση t3 t4 t5 t6 t7");
    CHECK(build_retrieval_query(s, "ερώτηση") == build_retrieval_query(s, "ερώτηση"));
    CHECK(build_retrieval_query(ChatSession{}, "μόνο") == "μόνο");

    s.turns[6].text.clear();
    CHECK(build_retrieval_query(s, "q") == "q t3 t4 t5 t6");
}

TEST_CASE("evidence assembly respects both budgets")
{
    CHECK(assemble_evidence({}).empty());

    std::vector<EvidenceDoc> hits;
    for (std::uint64_t i = 0; i < 8; ++i) {
        std::string body;
        for (int c = 0; c < 2500; ++c) body += "α";
        hits.push_back({testing::indexed_ada(i), 1.0, "h", body});
    }
    const auto all = assemble_evidence(hits, 2000, 16000);
    CHECK(all.find(hits[7].ada) != std::string::npos);
    // 8 bodies of 2000 code points plus headers and separators.
    std::size_t alphas = 0;
    for (char32_t c : utf8::decode(all)) alphas += c == U'α';
    CHECK(alphas == 16000);

    const auto cut = assemble_evidence(hits, 2000, 5000);
    CHECK(cut.find(hits[1].ada) != std::string::npos);
    CHECK(cut.find(hits[2].ada) == std::string::npos);

    const auto tiny = assemble_evidence(hits, 2000, 10);
    CHECK(tiny.find(hits[0].ada) != std::string::npos);

    const auto short_body = assemble_evidence({{"ΑΒΓΔΕΖΗΘ-ΙΚΛ", 2.0, "Θέμα: x", "σύντομο"}});
    CHECK(short_body == "[ADA: ΑΒΓΔΕΖΗΘ-ΙΚΛ]\nΘέμα: x\nσύντομο");
}

TEST_CASE("prompt rendering is stable")
{
    ChatSession s{"s", {turn(Role::User, "Πρώτη ερώτηση"), turn(Role::Assistant, "Πρώτη απάντηση")}};
    const auto p = build_prompt(s, "[ADA: ΑΒΓΔΕΖΗΘ-ΙΚΛ]\nh\nb", "Δεύτερη ερώτηση");
    const std::string expected = "### System\n" + std::string(system_prompt()) +
                                 (system_prompt().back() == '\n' ? "" : "\n") +
                                 "\n### History\nUser: Πρώτη ερώτηση\nAssistant: Πρώτη απάντηση\n"
                                 "\n### Evidence\n[ADA: ΑΒΓΔΕΖΗΘ-ΙΚΛ]\nh\nb\n\n### Question\nΔεύτερη ερώτηση\n";
    CHECK(render_prompt(p) == expected);
    CHECK(system_prompt().find("Always reference the ADA codes") != std::string_view::npos);

    const auto req = to_chat_request(p, 700, false);
    REQUIRE(req.messages.size() == 4);
    CHECK(req.messages[0].role == "system");
    CHECK(req.messages[1].role == "user");
    CHECK(req.messages[2].role == "assistant");
    CHECK(req.messages[3].content == "Evidence:\n[ADA: ΑΒΓΔΕΖΗΘ-ΙΚΛ]\nh\nb\n\nQuestion:\nΔεύτερη ερώτηση");
    CHECK(req.max_output_tokens == 700);
    CHECK(to_chat_request(p, 700, true).json_output);
}

TEST_CASE("ADA citations are extracted and validated")
{
    CHECK(extract_ada_citations("βλ. ΨΣ02ΟΕΨΠ-ΛΔΤ και 6Μ6ΨΟΕΨΠ-ΛΗ2") ==
          std::vector<std::string>{"ΨΣ02ΟΕΨΠ-ΛΔΤ", "6Μ6ΨΟΕΨΠ-ΛΗ2"});
    CHECK(extract_ada_citations("(ΨΣ02ΟΕΨΠ-ΛΔΤ), ΨΣ02ΟΕΨΠ-ΛΔΤ.") == std::vector<std::string>{"ΨΣ02ΟΕΨΠ-ΛΔΤ"});
    CHECK(extract_ada_citations("ΑΒ-ΓΔΕ ΨΣ02ΟΕΨΠ-ΛΔΤΧ").empty());
    CHECK(extract_ada_citations("").empty());
}

TEST_CASE("structured answers are validated")
{
    const auto a = parse_structured_answer(
        R"(```json
{"concise_answer":"α","detailed_explanation":"β","citations":["ΨΣ02ΟΕΨΠ-ΛΔΤ"]}
```)");
    CHECK(a.citations == std::vector<std::string>{"ΨΣ02ΟΕΨΠ-ΛΔΤ"});
    CHECK_THROWS_AS(parse_structured_answer(R"({"concise_answer":"α","citations":[]})"), UnparseableResponse);
    CHECK_THROWS_AS(parse_structured_answer(R"({"concise_answer":"α","detailed_explanation":"","citations":["nope"]})"),
                    UnparseableResponse);
    CHECK_THROWS_AS(parse_structured_answer("no json"), UnparseableResponse);
}

TEST_CASE("truncate_words caps output length")
{
    CHECK(truncate_words("ένα δύο  τρία τέσσερα", 2) == "ένα δύο  ");
    CHECK(truncate_words("ένα δύο", 5) == "ένα δύο");
    CHECK(truncate_words("ένα", 0).empty());
}

TEST_CASE("echo pipeline answers, cites and persists")
{
    Fixture fx;
    IndexRetriever retriever(fx.index);
    EchoGenerator gen;
    TempDir dir;
    FileSessionStore store(dir.path());
    FakeClock clock;
    RagService svc(retriever, gen, store, {}, &clock);

    const auto s = svc.create_session();
    CHECK(s.session_id.size() == 32);
    CHECK(svc.session(s.session_id).turns.empty());

    std::string streamed;
    const auto a = svc.ask(s.session_id, "Ποιο ποσό αφορά η ανάληψη υποχρέωσης για κρατήσεις τραπεζών;", AnswerMode::Streaming,
                           [&](std::string_view d) { streamed += d; });
    CHECK(streamed == a.text);
    CHECK_FALSE(a.no_evidence);
    REQUIRE(a.cited_adas.size() == 1);
    CHECK(a.cited_adas[0] == fx.adas[0]);
    CHECK(a.unsupported_citations.empty());
    CHECK(a.evidence_adas.front() == fx.adas[0]);

    auto stored = svc.session(s.session_id);
    REQUIRE(stored.turns.size() == 2);
    CHECK(stored.turns[0].role == Role::User);
    CHECK(stored.turns[1].cited_adas == a.cited_adas);
    CHECK(stored.turns[1].timestamp == clock.wall_ms());

    // Follow-ups carry the conversation into retrieval.
    const auto b = svc.ask(s.session_id, "Και το ποσό;");
    CHECK(b.retrieval_query.rfind("Και το ποσό; ", 0) == 0);
    CHECK(b.retrieval_query.find("κρατήσεις τραπεζών") != std::string::npos);
    CHECK(svc.session(s.session_id).turns.size() == 4);

    // A question made only of stopwords never reaches the generator.
    const auto c = svc.ask(s.session_id, "και το της");
    CHECK(c.no_evidence);
    CHECK(c.text == kNoEvidenceAnswer);
    CHECK(svc.session(s.session_id).turns.size() == 6);

    const auto d = svc.ask(svc.create_session().session_id, "ΨΨΨΨ ΩΩΩΩ");
    CHECK(d.no_evidence);

    CHECK_THROWS_AS(svc.ask("0123456789abcdef0123456789abcdef", "δήμος"), NotFound);
}

TEST_CASE("structured mode retries once then fails")
{
    Fixture fx;
    IndexRetriever retriever(fx.index);
    TempDir dir;
    FileSessionStore store(dir.path());

    const std::string good = R"({"concise_answer":"381,22 €","detailed_explanation":"x","citations":[")" + fx.adas[0] + "\"]}";
    CountingGenerator flaky({"not json", good});
    RagService svc(retriever, flaky, store);
    auto id = svc.create_session().session_id;
    const auto a = svc.ask(id, "κρατήσεις τραπεζών", AnswerMode::Structured);
    CHECK(flaky.calls == 2);
    REQUIRE(a.structured);
    CHECK(a.text == "381,22 €");
    CHECK(a.cited_adas == std::vector<std::string>{fx.adas[0]});
    CHECK(svc.session(id).turns.back().detail == "x");

    const std::string fabricated = R"({"concise_answer":"a","detailed_explanation":"","citations":["ΨΣ02ΟΕΨΠ-ΛΔΤ"]})";
    CountingGenerator liar({fabricated});
    RagService svc2(retriever, liar, store);
    id = svc2.create_session().session_id;
    const auto b = svc2.ask(id, "κρατήσεις τραπεζών", AnswerMode::Structured);
    CHECK(b.unsupported_citations == std::vector<std::string>{"ΨΣ02ΟΕΨΠ-ΛΔΤ"});

    CountingGenerator broken({"nope", "still nope"});
    RagService svc3(retriever, broken, store);
    id = svc3.create_session().session_id;
    CHECK_THROWS_AS(svc3.ask(id, "κρατήσεις τραπεζών", AnswerMode::Structured), GenerationFailed);
    CHECK(broken.calls == 2);
    const auto turns = svc3.session(id).turns;
    REQUIRE(turns.size() == 2);
    CHECK(turns[1].text.empty());
    CHECK_FALSE(turns[1].error.empty());

    EchoGenerator echo;
    RagService svc4(retriever, echo, store);
    id = svc4.create_session().session_id;
    const auto e = svc4.ask(id, "προμήθεια καυσίμων", AnswerMode::Structured);
    CHECK(e.cited_adas == std::vector<std::string>{fx.adas[1]});
}

TEST_CASE("failures are persisted as error turns")
{
    Fixture fx;
    TempDir dir;
    FileSessionStore store(dir.path());

    ThrowingRetriever bad;
    EchoGenerator echo;
    RagService svc(bad, echo, store);
    auto id = svc.create_session().session_id;
    CHECK_THROWS_AS(svc.ask(id, "δήμος"), RetrievalFailed);
    CHECK(svc.session(id).turns.at(1).error.find("index offline") != std::string::npos);

    IndexRetriever retriever(fx.index);
    CountingGenerator down({"x"});
    RagService svc2(retriever, down, store);
    id = svc2.create_session().session_id;
    CHECK_THROWS_AS(svc2.ask(id, "καυσίμων"), GenerationFailed);
    CHECK(svc2.session(id).turns.size() == 2);

    SearchIndex empty;
    IndexRetriever none(empty);
    RagService svc3(none, echo, store);
    id = svc3.create_session().session_id;
    CHECK_THROWS_AS(svc3.ask(id, "δήμος"), RetrievalFailed);
}

TEST_CASE("sessions round-trip through compressed files")
{
    TempDir dir;
    FileSessionStore store(dir.path());
    ChatSession s{new_session_id(), {}};
    for (int i = 0; i < 100; ++i) {
        ChatTurn t = turn(i % 2 ? Role::Assistant : Role::User, "Ερώτηση αριθμός " + std::to_string(i) + " για τον δήμο.");
        t.timestamp = 1609459200000 + i;
        if (i % 2) t.cited_adas = {"ΨΣ02ΟΕΨΠ-ΛΔΤ"};
        s.turns.push_back(t);
    }
    store.save(s);
    CHECK(store.load(s.session_id) == s);
    CHECK(std::filesystem::file_size(store.path_of(s.session_id)) < to_json(s).dump().size());
    CHECK(inflate_bytes(deflate_bytes("")) == "");
    CHECK_THROWS_AS(inflate_bytes("garbage"), CorruptRecord);
    CHECK_THROWS_AS(store.load(new_session_id()), NotFound);
    CHECK_THROWS_AS(store.load("../etc/passwd"), InvalidArgument);
    CHECK(new_session_id() != new_session_id());
}

TEST_CASE("concurrent questions on one session are serialized")
{
    Fixture fx;
    IndexRetriever retriever(fx.index);
    EchoGenerator gen;
    TempDir dir;
    FileSessionStore store(dir.path());
    RagService svc(retriever, gen, store);
    const auto id = svc.create_session().session_id;

    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) threads.emplace_back([&] { svc.ask(id, "προμήθεια καυσίμων"); });
    for (auto& t : threads) t.join();
    CHECK(svc.session(id).turns.size() == 16);
}

TEST_CASE("SSE parsing")
{
    const auto events = parse_sse("event: delta\ndata: {\"text\":\"a\"}\n\nevent: done\ndata: 1\ndata: 2\n\n");
    REQUIRE(events.size() == 2);
    CHECK(events[0].event == "delta");
    CHECK(events[1].data == "1\n2");
    CHECK(parse_sse("").empty());
}

namespace {

struct ServerThread {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    void start()
    {
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~ServerThread()
    {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("HTTP API")
{
    Fixture fx;
    IndexRetriever retriever(fx.index);
    EchoGenerator gen;
    TempDir dir;
    FileSessionStore store(dir.path());
    RagService svc(retriever, gen, store);

    ServerThread srv;
    mount_http_api(srv.server, svc);
    srv.start();
    httplib::Client cli("127.0.0.1", srv.port);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);

    auto created = cli.Post("/sessions", "", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
    const auto id = nlohmann::json::parse(created->body).at("session_id").get<std::string>();

    auto streamed = cli.Post("/sessions/" + id + "/messages",
                             nlohmann::json{{"question", "κρατήσεις τραπεζών"}}.dump(), "application/json");
    REQUIRE(streamed);
    CHECK(streamed->status == 200);
    CHECK(streamed->get_header_value("Content-Type") == "text/event-stream");
    const auto events = parse_sse(streamed->body);
    REQUIRE(events.size() >= 2);
    std::string joined;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
        CHECK(events[i].event == "delta");
        joined += nlohmann::json::parse(events[i].data).at("text").get<std::string>();
    }
    CHECK(events.back().event == "done");
    const auto done = nlohmann::json::parse(events.back().data);
    CHECK(done.at("answer") == joined);
    CHECK(done.at("citations") == nlohmann::json::array({fx.adas[0]}));

    auto structured = cli.Post("/sessions/" + svc.create_session().session_id + "/messages",
                               nlohmann::json{{"question", "καυσίμων"}, {"mode", "structured"}}.dump(), "application/json");
    REQUIRE(structured);
    CHECK(structured->status == 200);
    const auto body = nlohmann::json::parse(structured->body);
    CHECK(body.contains("concise_answer"));
    CHECK(body.at("citations") == nlohmann::json::array({fx.adas[1]}));

    auto history = cli.Get("/sessions/" + id);
    REQUIRE(history);
    CHECK(nlohmann::json::parse(history->body).at("turns").size() == 2);

    auto missing = cli.Post("/sessions/" + new_session_id() + "/messages", R"({"question":"x"})", "application/json");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(cli.Get("/sessions/" + new_session_id())->status == 404);
    CHECK(cli.Post("/sessions/" + id + "/messages", "{", "application/json")->status == 400);
    CHECK(cli.Post("/sessions/" + id + "/messages", R"({"question":"x","mode":"poem"})", "application/json")->status == 400);

    auto preflight = cli.Options("/sessions");
    REQUIRE(preflight);
    CHECK(preflight->status == 204);
}

TEST_CASE("HTTP error events and status codes")
{
    Fixture fx;
    IndexRetriever retriever(fx.index);
    CountingGenerator down({"not json"});
    TempDir dir;
    FileSessionStore store(dir.path());
    RagService svc(retriever, down, store);
    ServerThread srv;
    mount_http_api(srv.server, svc);
    srv.start();
    httplib::Client cli("127.0.0.1", srv.port);
    const auto id = svc.create_session().session_id;

    auto streamed = cli.Post("/sessions/" + id + "/messages", R"({"question":"καυσίμων"})", "application/json");
    REQUIRE(streamed);
    const auto events = parse_sse(streamed->body);
    REQUIRE(events.size() == 1);
    CHECK(events[0].event == "error");

    auto structured = cli.Post("/sessions/" + id + "/messages", R"({"question":"καυσίμων","mode":"structured"})",
                               "application/json");
    REQUIRE(structured);
    CHECK(structured->status == 502);
}

TEST_CASE("key-value session store adapter")
{
    std::mutex mu;
    std::map<std::string, std::string> kv;
    ServerThread srv;
    srv.server.Get(R"(/prefix/kv/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu);
        const auto it = kv.find(req.matches[1]);
        if (it == kv.end()) {
            res.status = 404;
            return;
        }
        res.set_content(it->second, "application/octet-stream");
    });
    srv.server.Put(R"(/prefix/kv/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu);
        kv[req.matches[1]] = req.body;
        res.status = 204;
    });
    srv.start();

    HttpKvSessionStore store(srv.url() + "/prefix");
    ChatSession s{new_session_id(), {turn(Role::User, "γεια")}};
    CHECK_FALSE(store.exists(s.session_id));
    store.save(s);
    CHECK(store.exists(s.session_id));
    CHECK(store.load(s.session_id) == s);
    CHECK(inflate_bytes(kv.at(s.session_id)) == to_json(s).dump());
    CHECK_THROWS_AS(store.load(new_session_id()), NotFound);

    HttpKvSessionStore dead("http://127.0.0.1:1", 1);
    CHECK_THROWS_AS(dead.load(s.session_id), StoreUnavailable);
}
