#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "diavgeia/errors.hpp"

namespace diavgeia {

/// Raised for unknown keys and unparseable values.
class ConfigError : public Error {
  public:
    using Error::Error;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every recognised setting with its default.
const std::vector<ConfigKey>& config_keys();

/// Layered settings: defaults < file < environment (`DIAVGEIA_<NAME>`) < flags.
class Config {
  public:
    Config();

    /// JSON object of key -> string/number/bool.
    void merge_file(const std::filesystem::path& path);
    void merge_json(const nlohmann::json& j, const std::string& origin);
    void merge_env(const std::function<const char*(const char*)>& getenv_fn);
    void set(const std::string& key, std::string value, std::string origin = "flag");

    const std::string& get(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    /// Where the current value came from: default, file, env or flag.
    const std::string& origin(const std::string& key) const;

    nlohmann::json to_json() const;

    static std::string env_name(std::string_view key);

  private:
    void check_key(const std::string& key) const;

    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> origins_;
};

}  // namespace diavgeia
