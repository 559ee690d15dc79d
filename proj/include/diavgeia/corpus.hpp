#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace diavgeia {

using Json = nlohmann::json;

/// True iff `candidate` is 8-12 characters of [Α-Ω A-Z 0-9], a hyphen, then
/// exactly 3 characters of the same class.
bool validate_ada(std::string_view candidate) noexcept;

/// Character class of ADA bodies: Greek capitals, Latin capitals, digits.
bool is_ada_char(char32_t cp) noexcept;

enum class StatusKind { Published, PendingRevocation, Revoked, Submitted, Other };

struct DecisionStatus {
    StatusKind kind = StatusKind::Published;
    std::string raw;  // only meaningful for Other

    static DecisionStatus parse(std::string_view text);
    std::string render() const;

    friend bool operator==(const DecisionStatus&, const DecisionStatus&) = default;
};

struct DecisionRecord {
    std::string ada;
    std::string protocol_number;
    std::string subject;
    std::int64_t issue_date = 0;  // Unix ms
    std::string decision_type_id;
    std::string organization_id;
    std::optional<std::string> organization_name;
    std::vector<std::string> unit_ids;
    std::vector<std::string> signer_ids;
    Json extra_field_values = Json::object();
    std::int64_t submission_timestamp = 0;  // Unix ms
    DecisionStatus status;
    std::string version_id;

    friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

enum class DocumentSource { ApiJsonPlusPdf, PreextractedText };

std::string_view to_string(DocumentSource source) noexcept;
DocumentSource parse_document_source(std::string_view text);

struct StoredDocument {
    DecisionRecord record;
    std::string body_markdown;
    DocumentSource source = DocumentSource::PreextractedText;
    std::string extraction_tool;
    std::int64_t stored_at = 0;  // Unix ms
};

/// Field names follow the platform's decision schema (ada, protocolNumber,
/// issueDate, ...). Throws CorruptRecord when the schema is violated.
Json record_to_json(const DecisionRecord& record);
DecisionRecord record_from_json(const Json& json);

/// "1970-01-01T00:00:00Z" style rendering of a Unix millisecond timestamp.
std::string format_iso8601_utc(std::int64_t unix_ms);

/// Line-oriented "Key: value" header used as the metadata prefix of indexed
/// content and of RAG evidence blocks. Pure; fixed field order.
std::string render_metadata_header(const DecisionRecord& record);

/// On-disk corpus: `<root>/<shard>/<ada>.json` + `<root>/<shard>/<ada>.md`.
/// The shard is two hex digits of a hash of the ADA; the file stem is the
/// percent-encoded ADA so paths are ASCII.
class CorpusLayout {
  public:
    explicit CorpusLayout(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const noexcept { return root_; }

    /// Relative path of the metadata file for `ada`, without extension.
    static std::filesystem::path shard_path(std::string_view ada);

    std::filesystem::path metadata_path(std::string_view ada) const;
    std::filesystem::path body_path(std::string_view ada) const;

    /// All stored ADAs in ascending byte order.
    std::vector<std::string> list_adas() const;

  private:
    std::filesystem::path root_;
};

std::string percent_encode(std::string_view bytes);
std::string percent_decode(std::string_view text);

/// Writes metadata and body side by side. Leaves the files untouched when an
/// identical record and body are already stored.
std::filesystem::path store_document(const CorpusLayout& layout, const StoredDocument& doc);

/// Throws NotFound for unknown ADAs and CorruptRecord on schema violations.
StoredDocument load_document(const CorpusLayout& layout, std::string_view ada);

}  // namespace diavgeia
