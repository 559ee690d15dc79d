#include "diavgeia/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace diavgeia {

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = {
        {"corpus", "corpus", "corpus root directory"},
        {"index", "index.dvix", "search index snapshot"},
        {"vectors", "vectors.dvvs", "vector store file"},
        {"workers", "4", "worker threads"},
        {"seed", "42", "seed for sampling and clustering"},
        {"format", "table", "output format: table or json"},
        {"api_base", "https://diavgeia.gov.gr/opendata", "OpenData API root"},
        {"rps", "2", "harvest request rate limit (requests per second)"},
        {"page_size", "100", "harvest page size"},
        {"encoder", "reference", "encoder: reference or remote"},
        {"encoder_url", "http://127.0.0.1:8000", "remote embedding endpoint root"},
        {"encoder_model", "all-MiniLM-L6-v2", "remote embedding model"},
        {"encoder_dim", "384", "remote embedding dimension"},
        {"generator", "echo", "answer generator: echo, remote or replay"},
        {"llm_url", "https://api.openai.com", "chat completion endpoint root"},
        {"llm_model", "gpt-5-mini", "chat model name"},
        {"replay_dir", "replay", "recorded model replies"},
        {"sessions", "sessions", "session store directory"},
        {"session_store_url", "", "remote key-value session store; empty for files"},
        {"port", "8080", "service port"},
        {"host", "127.0.0.1", "service bind address"},
        {"k", "8", "retrieved documents per question"},
        {"max_output_tokens", "1500", "generator output cap"},
    };
    return keys;
}

Config::Config()
{
    for (const auto& k : config_keys()) {
        values_[k.name] = k.default_value;
        origins_[k.name] = "default";
    }
}

std::string Config::env_name(std::string_view key)
{
    std::string out = "DIAVGEIA_";
    for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

void Config::check_key(const std::string& key) const
{
    if (!values_.count(key)) throw ConfigError("unknown configuration key '" + key + "'");
}

void Config::merge_json(const nlohmann::json& j, const std::string& origin)
{
    if (!j.is_object()) throw ConfigError(origin + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        check_key(key);
        std::string text;
        if (value.is_string()) text = value.get<std::string>();
        else if (value.is_number() || value.is_boolean()) text = value.dump();
        else throw ConfigError(origin + ": value of '" + key + "' must be a string, number or boolean");
        values_[key] = std::move(text);
        origins_[key] = "file";
    }
}

void Config::merge_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        merge_json(nlohmann::json::parse(in), path.string());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void Config::merge_env(const std::function<const char*(const char*)>& getenv_fn)
{
    for (const auto& k : config_keys()) {
        if (const char* v = getenv_fn(env_name(k.name).c_str())) {
            values_[k.name] = v;
            origins_[k.name] = "env";
        }
    }
}

void Config::set(const std::string& key, std::string value, std::string origin)
{
    check_key(key);
    values_[key] = std::move(value);
    origins_[key] = std::move(origin);
}

const std::string& Config::get(const std::string& key) const
{
    check_key(key);
    return values_.at(key);
}

long long Config::get_int(const std::string& key) const
{
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const auto out = std::stoll(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' must be an integer, got '" + v + "'");
}

double Config::get_double(const std::string& key) const
{
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const auto out = std::stod(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' must be a number, got '" + v + "'");
}

const std::string& Config::origin(const std::string& key) const
{
    check_key(key);
    return origins_.at(key);
}

nlohmann::json Config::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = {{"value", v}, {"origin", origins_.at(k)}};
    return j;
}

}  // namespace diavgeia
