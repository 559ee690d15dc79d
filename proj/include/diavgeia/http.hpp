#pragma once

// Every translation unit that touches cpp-httplib includes it through this
// header so the OpenSSL switch is seen identically everywhere.
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <memory>
#include <string>
#include <string_view>

namespace diavgeia::http {

/// "https://host:port/prefix" split into origin and path prefix.
struct BaseUrl {
    std::string origin;
    std::string prefix;

    static BaseUrl parse(std::string_view url);
    std::string path(std::string_view suffix) const;
};

std::unique_ptr<httplib::Client> make_client(const BaseUrl& base, int timeout_seconds = 60);

}  // namespace diavgeia::http
