#include "diavgeia/llm.hpp"

#include <fstream>
#include <iterator>

#include <json.hpp>

#include "diavgeia/hashing.hpp"
#include "diavgeia/http.hpp"

namespace diavgeia {

namespace {

nlohmann::json request_body(const std::string& model, const ChatRequest& request, bool stream)
{
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body = {{"model", model}, {"messages", messages}, {"max_tokens", request.max_output_tokens}};
    if (request.json_output) body["response_format"] = {{"type", "json_object"}};
    if (stream) body["stream"] = true;
    return body;
}

httplib::Headers auth_headers(const std::string& api_key)
{
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    return headers;
}

}  // namespace

OpenAiChatModel::OpenAiChatModel(std::string base_url, std::string model, std::string api_key, int timeout_seconds)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)), timeout_(timeout_seconds)
{}

std::string OpenAiChatModel::complete(const ChatRequest& request) const
{
    const auto base = http::BaseUrl::parse(base_url_);
    auto client = http::make_client(base, timeout_);
    const auto res = client->Post(base.path("/v1/chat/completions"), auth_headers(api_key_),
                                  request_body(model_, request, false).dump(), "application/json");
    if (!res) throw RemoteError("chat request failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw RemoteError("chat service returned HTTP " + std::to_string(res->status));
    try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw UnparseableResponse(std::string("malformed chat response: ") + e.what(), res->body);
    }
}

std::string OpenAiChatModel::stream(const ChatRequest& request, const DeltaSink& sink) const
{
    const auto base = http::BaseUrl::parse(base_url_);
    auto client = http::make_client(base, timeout_);

    httplib::Request req;
    req.method = "POST";
    req.path = base.path("/v1/chat/completions");
    req.headers = auth_headers(api_key_);
    req.headers.emplace("Accept", "text/event-stream");
    req.set_header("Content-Type", "application/json");
    req.body = request_body(model_, request, true).dump();

    std::string pending;
    std::string full;
    std::string bad_event;
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        pending.append(data, len);
        std::size_t nl;
        while ((nl = pending.find('\n')) != std::string::npos) {
            std::string line = pending.substr(0, nl);
            pending.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.rfind("data:", 0) != 0) continue;
            std::string_view payload(line);
            payload.remove_prefix(5);
            while (!payload.empty() && payload.front() == ' ') payload.remove_prefix(1);
            if (payload == "[DONE]") return true;
            try {
                const auto j = nlohmann::json::parse(payload);
                const auto& delta = j.at("choices").at(0).at("delta");
                if (delta.contains("content") && delta["content"].is_string()) {
                    const auto piece = delta["content"].get<std::string>();
                    full += piece;
                    sink(piece);
                }
            } catch (const nlohmann::json::exception&) {
                bad_event = std::string(payload);
                return false;
            }
        }
        return true;
    };

    const auto res = client->send(req);
    if (!bad_event.empty()) throw UnparseableResponse("malformed stream event", bad_event);
    if (!res) throw RemoteError("chat stream failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw RemoteError("chat service returned HTTP " + std::to_string(res->status));
    return full;
}

std::string request_key(std::string_view model, const ChatRequest& request)
{
    return sha256_hex(std::string(model) + '\n' + request_body(std::string(model), request, false).dump());
}

ReplayCache::ReplayCache(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

std::optional<std::string> ReplayCache::get(const std::string& key) const
{
    std::ifstream in(dir_ / (key + ".json"));
    if (!in) return std::nullopt;
    try {
        return nlohmann::json::parse(in).at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord("replay cache entry " + key + ": " + e.what());
    }
}

void ReplayCache::put(const std::string& key, const std::string& model, const std::string& response)
{
    std::lock_guard lock(write_mu_);
    const auto target = dir_ / (key + ".json");
    const auto tmp = dir_ / (key + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << nlohmann::json{{"model", model}, {"response", response}}.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, target);
}

ReplayingChatModel::ReplayingChatModel(std::string model, std::shared_ptr<ReplayCache> cache,
                                       std::shared_ptr<const ChatModel> inner)
    : model_(std::move(model)), cache_(std::move(cache)), inner_(std::move(inner))
{}

std::string ReplayingChatModel::complete(const ChatRequest& request) const
{
    const auto key = request_key(model_, request);
    if (auto hit = cache_->get(key)) return *hit;
    if (!inner_) throw RemoteError("no recorded response for request " + key);
    auto text = inner_->complete(request);
    cache_->put(key, model_, text);
    return text;
}

std::string strip_to_json_object(std::string_view reply)
{
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw UnparseableResponse("no JSON object in reply", std::string(reply));
    }
    return std::string(reply.substr(open, close - open + 1));
}

std::string render_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values)
{
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(pos, open - pos));
        const auto name = tmpl.substr(open + 2, close - open - 2);
        bool found = false;
        for (const auto& [k, v] : values) {
            if (k == name) {
                out += v;
                found = true;
                break;
            }
        }
        if (!found) out.append(tmpl.substr(open, close + 2 - open));
        pos = close + 2;
    }
    out.append(tmpl.substr(pos));
    return out;
}

}  // namespace diavgeia
