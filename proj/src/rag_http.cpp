#include "diavgeia/http.hpp"
#include "diavgeia/rag.hpp"

namespace diavgeia {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message)
{
    send_json(res, status, {{"error", message}});
}

std::string sse_frame(std::string_view event, const nlohmann::json& data)
{
    return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

}  // namespace

void mount_http_api(httplib::Server& server, RagService& service)
{
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    server.Post("/sessions", [&service](const httplib::Request&, httplib::Response& res) {
        try {
            send_json(res, 201, {{"session_id", service.create_session().session_id}});
        } catch (const std::exception& e) {
            send_error(res, 503, e.what());
        }
    });

    server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, to_json(service.session(req.matches[1])));
        } catch (const NotFound& e) {
            send_error(res, 404, e.what());
        } catch (const InvalidArgument& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 503, e.what());
        }
    });

    server.Post(R"(/sessions/([^/]+)/messages)", [&service](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        std::string question;
        AnswerMode mode = AnswerMode::Streaming;
        try {
            const auto body = nlohmann::json::parse(req.body);
            question = body.at("question").get<std::string>();
            const auto m = body.value("mode", std::string("streaming"));
            if (m == "structured") mode = AnswerMode::Structured;
            else if (m != "streaming") throw InvalidArgument("mode must be 'streaming' or 'structured'");
        } catch (const std::exception& e) {
            return send_error(res, 400, e.what());
        }
        try {
            service.session(id);
        } catch (const NotFound& e) {
            return send_error(res, 404, e.what());
        } catch (const InvalidArgument& e) {
            return send_error(res, 400, e.what());
        }

        if (mode == AnswerMode::Structured) {
            try {
                send_json(res, 200, to_json(service.ask(id, question, mode)));
            } catch (const RetrievalFailed& e) {
                send_error(res, 503, e.what());
            } catch (const GenerationFailed& e) {
                send_error(res, 502, e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
            return;
        }

        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [&service, id, question](std::size_t, httplib::DataSink& sink) {
            auto write = [&sink](const std::string& frame) { sink.write(frame.data(), frame.size()); };
            try {
                const auto answer = service.ask(id, question, AnswerMode::Streaming, [&](std::string_view delta) {
                    write(sse_frame("delta", {{"text", std::string(delta)}}));
                });
                write(sse_frame("done", to_json(answer)));
            } catch (const std::exception& e) {
                write(sse_frame("error", {{"error", e.what()}}));
            }
            sink.done();
            return true;
        });
    });
}

std::vector<SseEvent> parse_sse(std::string_view body)
{
    std::vector<SseEvent> out;
    SseEvent current;
    bool has_data = false;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        auto end = body.find('\n', pos);
        if (end == std::string_view::npos) end = body.size();
        auto line = body.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        if (line.empty()) {
            if (has_data || !current.event.empty()) out.push_back(std::move(current));
            current = {};
            has_data = false;
            if (end == body.size()) break;
            continue;
        }
        auto field_value = [&](std::string_view field) {
            auto v = line.substr(field.size());
            if (!v.empty() && v.front() == ' ') v.remove_prefix(1);
            return std::string(v);
        };
        if (line.rfind("event:", 0) == 0) {
            current.event = field_value("event:");
        } else if (line.rfind("data:", 0) == 0) {
            if (has_data) current.data.push_back('\n');
            current.data += field_value("data:");
            has_data = true;
        }
        if (end == body.size()) {
            if (has_data || !current.event.empty()) out.push_back(std::move(current));
            break;
        }
    }
    return out;
}

}  // namespace diavgeia
