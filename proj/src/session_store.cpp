#include <openssl/rand.h>
#include <zlib.h>

#include <fstream>
#include <sstream>

#include "diavgeia/http.hpp"
#include "diavgeia/rag.hpp"

namespace diavgeia {

namespace fs = std::filesystem;

std::string deflate_bytes(std::string_view raw)
{
    uLongf size = compressBound(static_cast<uLong>(raw.size()));
    std::string out(size, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(out.data()), &size, reinterpret_cast<const Bytef*>(raw.data()),
                             static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION);
    if (rc != Z_OK) throw Error("deflate failed (" + std::to_string(rc) + ")");
    out.resize(size);
    return out;
}

std::string inflate_bytes(std::string_view compressed)
{
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error("inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) break;
        out.append(buf, sizeof buf - zs.avail_out);
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            rc = Z_DATA_ERROR;  // truncated input
            break;
        }
    }
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw CorruptRecord("compressed session data is damaged");
    return out;
}

std::string new_session_id()
{
    unsigned char bytes[16];
    if (RAND_bytes(bytes, sizeof bytes) != 1) throw Error("CSPRNG unavailable");
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (unsigned char b : bytes) {
        id.push_back(hex[b >> 4]);
        id.push_back(hex[b & 15]);
    }
    return id;
}

namespace {

void check_id(const std::string& id)
{
    if (id.empty() || id.size() > 128) throw InvalidArgument("bad session id");
    for (char c : id) {
        const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '-' || c == '_';
        if (!ok) throw InvalidArgument("bad session id '" + id + "'");
    }
}

ChatSession decode_session(std::string_view compressed, const std::string& id)
{
    try {
        auto s = session_from_json(nlohmann::json::parse(inflate_bytes(compressed)));
        if (s.session_id != id) throw CorruptRecord("session file " + id + " holds " + s.session_id);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptRecord("session " + id + ": " + e.what());
    }
}

}  // namespace

FileSessionStore::FileSessionStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path FileSessionStore::path_of(const std::string& session_id) const
{
    check_id(session_id);
    return dir_ / (session_id + ".json.z");
}

ChatSession FileSessionStore::load(const std::string& session_id) const
{
    const auto path = path_of(session_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("session " + session_id);
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_session(ss.str(), session_id);
}

void FileSessionStore::save(const ChatSession& session)
{
    const auto path = path_of(session.session_id);
    const auto data = deflate_bytes(to_json(session).dump());
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
    const auto tmp = dir_ / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

bool FileSessionStore::exists(const std::string& session_id) const { return fs::exists(path_of(session_id)); }

HttpKvSessionStore::HttpKvSessionStore(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_(timeout_seconds)
{}

ChatSession HttpKvSessionStore::load(const std::string& session_id) const
{
    check_id(session_id);
    const auto base = http::BaseUrl::parse(base_url_);
    auto cli = http::make_client(base, timeout_);
    auto res = cli->Get(base.path("/kv/" + session_id));
    if (!res) throw StoreUnavailable("session store: " + httplib::to_string(res.error()));
    if (res->status == 404) throw NotFound("session " + session_id);
    if (res->status != 200) throw StoreUnavailable("session store answered " + std::to_string(res->status));
    return decode_session(res->body, session_id);
}

void HttpKvSessionStore::save(const ChatSession& session)
{
    check_id(session.session_id);
    const auto base = http::BaseUrl::parse(base_url_);
    auto cli = http::make_client(base, timeout_);
    auto res = cli->Put(base.path("/kv/" + session.session_id), deflate_bytes(to_json(session).dump()),
                        "application/octet-stream");
    if (!res) throw StoreUnavailable("session store: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw StoreUnavailable("session store answered " + std::to_string(res->status));
}

bool HttpKvSessionStore::exists(const std::string& session_id) const
{
    try {
        load(session_id);
        return true;
    } catch (const NotFound&) {
        return false;
    }
}

}  // namespace diavgeia
