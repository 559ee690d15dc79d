#include "diavgeia/http.hpp"

#include "diavgeia/errors.hpp"

namespace diavgeia::http {

BaseUrl BaseUrl::parse(std::string_view url)
{
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw InvalidArgument("URL without scheme: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) out.prefix = std::string(url.substr(path_start));
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

std::string BaseUrl::path(std::string_view suffix) const
{
    std::string p = prefix;
    if (suffix.empty() || suffix.front() != '/') p.push_back('/');
    p.append(suffix);
    return p;
}

std::unique_ptr<httplib::Client> make_client(const BaseUrl& base, int timeout_seconds)
{
    auto client = std::make_unique<httplib::Client>(base.origin);
    client->set_connection_timeout(timeout_seconds, 0);
    client->set_read_timeout(timeout_seconds, 0);
    client->set_write_timeout(timeout_seconds, 0);
    client->set_follow_location(true);
    return client;
}

}  // namespace diavgeia::http
