#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diavgeia/errors.hpp"

namespace diavgeia {

class RemoteError : public Error {
  public:
    using Error::Error;
};

/// The model answered, but not in the expected shape.
class UnparseableResponse : public Error {
  public:
    UnparseableResponse(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

  private:
    std::string raw_;
};

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    int max_output_tokens = 1500;
    bool json_output = false;
};

using DeltaSink = std::function<void(std::string_view)>;

/// Chat-completion model. Implementations are thread-safe.
class ChatModel {
  public:
    virtual ~ChatModel() = default;
    virtual std::string model() const = 0;
    virtual std::string complete(const ChatRequest& request) const = 0;
    /// Streams deltas to `sink` and returns the full text.
    virtual std::string stream(const ChatRequest& request, const DeltaSink& sink) const
    {
        auto text = complete(request);
        sink(text);
        return text;
    }
};

/// OpenAI-compatible `/v1/chat/completions` client.
class OpenAiChatModel final : public ChatModel {
  public:
    OpenAiChatModel(std::string base_url, std::string model, std::string api_key, int timeout_seconds = 120);

    std::string model() const override { return model_; }
    std::string complete(const ChatRequest& request) const override;
    std::string stream(const ChatRequest& request, const DeltaSink& sink) const override;

  private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int timeout_;
};

/// sha256 over the model name and the canonical request body.
std::string request_key(std::string_view model, const ChatRequest& request);

/// One JSON file per (model, request) under `dir`.
class ReplayCache {
  public:
    explicit ReplayCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& model, const std::string& response);
    const std::filesystem::path& dir() const noexcept { return dir_; }

  private:
    std::filesystem::path dir_;
    mutable std::mutex write_mu_;
};

/// Serves recorded responses; on a miss calls `inner` and records the
/// answer. With no inner model a miss raises RemoteError.
class ReplayingChatModel final : public ChatModel {
  public:
    ReplayingChatModel(std::string model, std::shared_ptr<ReplayCache> cache, std::shared_ptr<const ChatModel> inner = {});

    std::string model() const override { return model_; }
    std::string complete(const ChatRequest& request) const override;

  private:
    std::string model_;
    std::shared_ptr<ReplayCache> cache_;
    std::shared_ptr<const ChatModel> inner_;
};

/// Extracts the outermost JSON object from a reply that may carry prose or
/// code fences around it.
std::string strip_to_json_object(std::string_view reply);

/// Fills `{{name}}` placeholders.
std::string render_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace diavgeia
