#include "diavgeia/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "diavgeia/errors.hpp"
#include "diavgeia/hashing.hpp"
#include "diavgeia/utf8.hpp"

namespace fs = std::filesystem;

namespace diavgeia {

bool is_ada_char(char32_t cp) noexcept
{
    // U+03A2 is unassigned inside the capital block.
    return (cp >= U'0' && cp <= U'9') || (cp >= U'A' && cp <= U'Z') ||
           (cp >= 0x0391 && cp <= 0x03A9 && cp != 0x03A2);
}

bool validate_ada(std::string_view candidate) noexcept
{
    std::size_t pos = 0;
    std::size_t head = 0;
    while (pos < candidate.size()) {
        const char32_t cp = utf8::next(candidate, pos);
        if (cp == U'-') break;
        if (!is_ada_char(cp)) return false;
        ++head;
    }
    if (head < 8 || head > 12) return false;
    std::size_t tail = 0;
    while (pos < candidate.size()) {
        if (!is_ada_char(utf8::next(candidate, pos))) return false;
        ++tail;
    }
    return tail == 3 && candidate[candidate.size() - 1] != '-';
}

DecisionStatus DecisionStatus::parse(std::string_view text)
{
    std::string norm(text);
    std::replace(norm.begin(), norm.end(), ' ', '_');
    if (norm == "PUBLISHED") return {StatusKind::Published, {}};
    if (norm == "PENDING_REVOCATION") return {StatusKind::PendingRevocation, {}};
    if (norm == "REVOKED") return {StatusKind::Revoked, {}};
    if (norm == "SUBMITTED") return {StatusKind::Submitted, {}};
    return {StatusKind::Other, std::string(text)};
}

std::string DecisionStatus::render() const
{
    switch (kind) {
    case StatusKind::Published: return "PUBLISHED";
    case StatusKind::PendingRevocation: return "PENDING_REVOCATION";
    case StatusKind::Revoked: return "REVOKED";
    case StatusKind::Submitted: return "SUBMITTED";
    case StatusKind::Other: break;
    }
    return raw;
}

std::string_view to_string(DocumentSource source) noexcept
{
    return source == DocumentSource::ApiJsonPlusPdf ? "API_JSON_PLUS_PDF" : "PREEXTRACTED_TEXT";
}

DocumentSource parse_document_source(std::string_view text)
{
    if (text == "API_JSON_PLUS_PDF") return DocumentSource::ApiJsonPlusPdf;
    if (text == "PREEXTRACTED_TEXT") return DocumentSource::PreextractedText;
    throw CorruptRecord("unknown document source: " + std::string(text));
}

Json record_to_json(const DecisionRecord& r)
{
    Json j = {
        {"ada", r.ada},
        {"protocolNumber", r.protocol_number},
        {"subject", r.subject},
        {"issueDate", r.issue_date},
        {"decisionTypeId", r.decision_type_id},
        {"organizationId", r.organization_id},
        {"unitIds", r.unit_ids},
        {"signerIds", r.signer_ids},
        {"extraFieldValues", r.extra_field_values},
        {"submissionTimestamp", r.submission_timestamp},
        {"status", r.status.render()},
        {"versionId", r.version_id},
    };
    if (r.organization_name) j["organizationName"] = *r.organization_name;
    return j;
}

namespace {

std::string string_field(const Json& j, const char* key, bool required = true)
{
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) throw CorruptRecord(std::string("missing field ") + key);
        return {};
    }
    if (!it->is_string()) throw CorruptRecord(std::string("field ") + key + " is not a string");
    return it->get<std::string>();
}

std::int64_t timestamp_field(const Json& j, const char* key)
{
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return 0;
    if (!it->is_number_integer()) throw CorruptRecord(std::string("field ") + key + " is not an integer");
    const auto v = it->get<std::int64_t>();
    if (v < 0) throw CorruptRecord(std::string("field ") + key + " is negative");
    return v;
}

std::vector<std::string> string_list(const Json& j, const char* key)
{
    std::vector<std::string> out;
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    if (!it->is_array()) throw CorruptRecord(std::string("field ") + key + " is not an array");
    for (const auto& v : *it) {
        if (!v.is_string()) throw CorruptRecord(std::string("field ") + key + " holds a non-string");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

DecisionRecord record_from_json(const Json& j)
{
    if (!j.is_object()) throw CorruptRecord("decision record is not a JSON object");
    DecisionRecord r;
    r.ada = string_field(j, "ada");
    if (!validate_ada(r.ada)) throw CorruptRecord("invalid ADA: " + r.ada);
    r.protocol_number = string_field(j, "protocolNumber", false);
    r.subject = string_field(j, "subject", false);
    r.issue_date = timestamp_field(j, "issueDate");
    r.decision_type_id = string_field(j, "decisionTypeId", false);
    r.organization_id = string_field(j, "organizationId", false);
    if (auto it = j.find("organizationName"); it != j.end() && it->is_string()) {
        r.organization_name = it->get<std::string>();
    }
    r.unit_ids = string_list(j, "unitIds");
    r.signer_ids = string_list(j, "signerIds");
    if (auto it = j.find("extraFieldValues"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw CorruptRecord("extraFieldValues is not an object");
        r.extra_field_values = *it;
    }
    r.submission_timestamp = timestamp_field(j, "submissionTimestamp");
    r.status = DecisionStatus::parse(string_field(j, "status", false));
    r.version_id = string_field(j, "versionId", false);
    return r;
}

std::string format_iso8601_utc(std::int64_t unix_ms)
{
    // Days-to-civil conversion (proleptic Gregorian).
    std::int64_t secs = unix_ms / 1000;
    if (unix_ms < 0 && unix_ms % 1000 != 0) --secs;
    std::int64_t days = secs / 86400;
    std::int64_t rem = secs % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const std::int64_t z = days + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int64_t year = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const std::int64_t day = doy - (153 * mp + 2) / 5 + 1;
    const std::int64_t month = mp < 10 ? mp + 3 : mp - 9;
    if (month <= 2) ++year;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ", static_cast<long long>(year),
                  static_cast<long long>(month), static_cast<long long>(day), static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
    return buf;
}

std::string render_metadata_header(const DecisionRecord& r)
{
    std::string out;
    auto line = [&out](std::string_view key, std::string_view value) {
        out.append(key).append(": ").append(value).push_back('\n');
    };
    line("ADA", r.ada);
    line("Protocol", r.protocol_number);
    line("Issue Date", format_iso8601_utc(r.issue_date));
    line("Subject", r.subject);
    if (r.organization_name && !r.organization_name->empty()) {
        line("Organization", *r.organization_name + " (" + r.organization_id + ")");
    } else {
        line("Organization", r.organization_id);
    }
    std::string signers;
    for (const auto& s : r.signer_ids) {
        if (!signers.empty()) signers += ", ";
        signers += s;
    }
    line("Signers", signers);
    // nlohmann objects iterate in key order, which fixes the field order.
    for (const auto& [key, value] : r.extra_field_values.items()) {
        line("Extra." + key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return out;
}

std::string percent_encode(std::string_view bytes)
{
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : bytes) {
        if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        }
    }
    return out;
}

std::string percent_decode(std::string_view text)
{
    auto hex = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '%' && i + 2 < text.size()) {
            const int hi = hex(text[i + 1]);
            const int lo = hex(text[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                continue;
            }
        }
        out.push_back(text[i]);
    }
    return out;
}

fs::path CorpusLayout::shard_path(std::string_view ada)
{
    static constexpr char kHex[] = "0123456789abcdef";
    const auto h = fnv1a64(ada);
    const char shard[3] = {kHex[(h >> 4) & 0xF], kHex[h & 0xF], '\0'};
    return fs::path(shard) / percent_encode(ada);
}

fs::path CorpusLayout::metadata_path(std::string_view ada) const
{
    auto p = root_ / shard_path(ada);
    p += ".json";
    return p;
}

fs::path CorpusLayout::body_path(std::string_view ada) const
{
    auto p = root_ / shard_path(ada);
    p += ".md";
    return p;
}

std::vector<std::string> CorpusLayout::list_adas() const
{
    std::vector<std::string> adas;
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) return adas;
    for (const auto& shard : fs::directory_iterator(root_)) {
        if (!shard.is_directory()) continue;
        for (const auto& entry : fs::directory_iterator(shard.path())) {
            if (entry.path().extension() != ".json") continue;
            adas.push_back(percent_decode(entry.path().stem().string()));
        }
    }
    std::sort(adas.begin(), adas.end());
    return adas;
}

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes)
{
    static std::atomic<unsigned> counter{0};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "-" +
           std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename to " + path.string() + ": " + ec.message());
}

Json document_to_json(const StoredDocument& doc)
{
    Json j = record_to_json(doc.record);
    j["_provenance"] = {
        {"source", to_string(doc.source)},
        {"extractionTool", doc.extraction_tool},
        {"storedAt", doc.stored_at},
    };
    return j;
}

}  // namespace

fs::path store_document(const CorpusLayout& layout, const StoredDocument& doc)
{
    if (!validate_ada(doc.record.ada)) throw InvalidArgument("invalid ADA: " + doc.record.ada);
    if (!utf8::is_valid(doc.body_markdown) || doc.body_markdown.find('\0') != std::string::npos) {
        throw InvalidArgument("body of " + doc.record.ada + " is not NUL-free UTF-8");
    }
    const auto meta = layout.metadata_path(doc.record.ada);
    const auto body = layout.body_path(doc.record.ada);
    std::error_code ec;
    fs::create_directories(meta.parent_path(), ec);
    if (ec) throw IoError("cannot create " + meta.parent_path().string() + ": " + ec.message());

    if (fs::exists(meta) && fs::exists(body)) {
        try {
            const auto existing = load_document(layout, doc.record.ada);
            if (existing.record == doc.record && existing.body_markdown == doc.body_markdown) return meta;
        } catch (const Error&) {
            // Unreadable previous version; overwrite it.
        }
    }
    write_file_atomic(body, doc.body_markdown);
    write_file_atomic(meta, document_to_json(doc).dump(2) + "\n");
    return meta;
}

StoredDocument load_document(const CorpusLayout& layout, std::string_view ada)
{
    const auto meta = layout.metadata_path(ada);
    if (!fs::exists(meta)) throw NotFound("no stored decision " + std::string(ada));
    Json j;
    try {
        j = Json::parse(read_file(meta));
    } catch (const Json::parse_error& e) {
        throw CorruptRecord(meta.string() + ": " + e.what());
    }
    StoredDocument doc;
    doc.record = record_from_json(j);
    if (doc.record.ada != ada) throw CorruptRecord(meta.string() + ": ADA does not match file name");
    if (auto it = j.find("_provenance"); it != j.end() && it->is_object()) {
        doc.source = parse_document_source(it->value("source", "PREEXTRACTED_TEXT"));
        doc.extraction_tool = it->value("extractionTool", "");
        doc.stored_at = it->value("storedAt", std::int64_t{0});
    }
    const auto body = layout.body_path(ada);
    if (!fs::exists(body)) throw CorruptRecord("missing body file for " + std::string(ada));
    doc.body_markdown = read_file(body);
    return doc;
}

}  // namespace diavgeia
