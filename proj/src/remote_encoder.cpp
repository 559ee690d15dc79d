#include <json.hpp>

#include "diavgeia/embedding.hpp"
#include "diavgeia/http.hpp"

namespace diavgeia {

RemoteEncoder::RemoteEncoder(std::string base_url, std::string model, Eigen::Index dimension, std::string api_key)
    : base_url_(std::move(base_url)), model_(std::move(model)), dim_(dimension), api_key_(std::move(api_key))
{}

Eigen::VectorXd RemoteEncoder::encode(std::string_view text) const
{
    const auto base = http::BaseUrl::parse(base_url_);
    auto client = http::make_client(base);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const nlohmann::json body = {{"model", model_}, {"input", std::string(text)}};
    const auto res = client->Post(base.path("/v1/embeddings"), headers, body.dump(), "application/json");
    if (!res) throw EncoderError("embedding request failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw EncoderError("embedding service returned HTTP " + std::to_string(res->status));
    try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& values = j.at("data").at(0).at("embedding");
        Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i].get<double>();
        if (v.size() != dim_) throw EncoderError("embedding has dimension " + std::to_string(v.size()));
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw EncoderError(std::string("malformed embedding response: ") + e.what());
    }
}

}  // namespace diavgeia
