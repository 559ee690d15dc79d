// Writes the small deterministic corpus under tests/fixtures/mini plus the
// boilerplate pair file and QA pair file that go with it.
//
//   make_fixture_corpus OUT_DIR [N_DOCS]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "diavgeia/corpus.hpp"
#include "diavgeia/hashing.hpp"
#include "diavgeia/qa.hpp"
#include "diavgeia/utf8.hpp"

using namespace diavgeia;
namespace fs = std::filesystem;

namespace {

struct Org {
    const char* id;
    const char* name;
    const char* code;  // 4-character ADA infix
    const char* signer;
    const char* role;
};

const Org kOrgs[] = {
    {"99221922", "ΔΗΜΟΣ ΘΗΡΑΣ", "ΩΡΕΙ", "ΝΙΚΟΛΑΟΣ ΖΩΡΖΟΣ", "Δήμαρχος"},
    {"50183", "Δ.Ε.Υ.Α ΘΗΡΑΣ", "ΟΕΨΠ", "ΕΥΑΓΓΕΛΟΣ ΖΩΡΖΟΣ", "Διευθυντής"},
    {"5003", "ΠΕΡΙΦΕΡΕΙΑ ΚΡΗΤΗΣ", "7ΛΛ9", "ΣΤΑΥΡΟΣ ΑΡΝΑΟΥΤΑΚΗΣ", "Περιφερειάρχης"},
    {"100015713", "ΓΕΝΙΚΟ ΝΟΣΟΚΟΜΕΙΟ ΠΑΤΡΩΝ", "4690", "ΘΕΟΦΑΝΗΣ ΡΟΪΔΗΣ", "Διοικητής"},
    {"99206919", "ΚΡΑΤΙΚΗ ΣΧΟΛΗ ΟΡΧΗΣΤΙΚΗΣ ΤΕΧΝΗΣ", "469Η", "ΧΑΡΑΛΑΜΠΟΣ ΚΟΚΚΙΝΟΣ", "Διευθυντής"},
};

const char* kPurposes[] = {
    "την προμήθεια καυσίμων κίνησης",
    "τη συντήρηση ανελκυστήρων",
    "την προμήθεια αναλωσίμων γραφείου",
    "υπηρεσίες ταχυμεταφοράς",
    "τη συντήρηση λογισμικού μισθοδοσίας",
    "τις κρατήσεις τραπεζών",
    "την προμήθεια ιατρικού εξοπλισμού",
    "τον καθαρισμό κοινόχρηστων χώρων",
    "την επισκευή οχημάτων",
    "νομικές υπηρεσίες",
};

const char* kKae[] = {"0851", "1511", "6117", "6266", "6422", "6671"};

constexpr char32_t kAdaChars[] = U"0123456789ΑΒΓΔΕΖΗΘΙΚΛΜΝΞΟΠΡΣΤΥΦΧΨΩ";

std::string make_ada(SplitMix64& rng, const Org& org)
{
    const auto n = std::size(kAdaChars) - 1;
    std::u32string head;
    for (int i = 0; i < 4; ++i) head.push_back(kAdaChars[rng.below(n)]);
    std::u32string tail;
    for (int i = 0; i < 3; ++i) tail.push_back(kAdaChars[rng.below(n)]);
    return utf8::encode(head) + org.code + "-" + utf8::encode(tail);
}

struct Generated {
    StoredDocument doc;
    int kind;
    std::string purpose;
    std::int64_t cents;
};

Generated make_document(SplitMix64& rng)
{
    const Org& org = kOrgs[rng.below(std::size(kOrgs))];
    const int kind = static_cast<int>(rng.below(4));
    const std::string purpose = kPurposes[rng.below(std::size(kPurposes))];
    const auto cents = static_cast<std::int64_t>(5000 + rng.below(5'000'000));
    const std::string amount = format_amount(cents);
    const std::string proto = std::to_string(1000 + rng.below(9000)) + "/" + std::to_string(1 + rng.below(28)) + "-03-2024";
    const std::string kae = kKae[rng.below(std::size(kKae))];

    StoredDocument d;
    auto& r = d.record;
    r.ada = make_ada(rng, org);
    r.protocol_number = proto;
    r.issue_date = 1704067200000 + static_cast<std::int64_t>(rng.below(300)) * 86400000;
    r.organization_id = org.id;
    r.organization_name = org.name;
    r.unit_ids = {std::to_string(80000 + rng.below(1000))};
    r.signer_ids = {std::to_string(100000 + (fnv1a64(org.signer) % 900000))};
    r.submission_timestamp = r.issue_date + 3600000;
    r.status = DecisionStatus::parse("PUBLISHED");
    r.version_id = std::to_string(fnv1a64(r.ada) % 100000000);
    d.source = DocumentSource::PreextractedText;
    d.stored_at = 1735689600000;

    const std::string sign = std::string("\n\nΟ ") + org.role + "\n\n" + org.signer + "\n";
    std::string& b = d.body_markdown;
    switch (kind) {
    case 0:
        r.subject = "Ανάληψη υποχρέωσης για " + purpose;
        r.decision_type_id = "Β.1.3";
        r.extra_field_values = {{"amountWithVAT", {{"amount", static_cast<double>(cents) / 100.0}, {"currency", "EUR"}}}};
        b = "# ΑΠΟΦΑΣΗ ΑΝΑΛΗΨΗΣ ΥΠΟΧΡΕΩΣΗΣ\n\n" + std::string("Ο ") + org.role + " της " + org.name +
            "\n\nΈχοντας υπόψη:\n\n1. Τις διατάξεις του ν. 4270/2014 «Αρχές δημοσιονομικής διαχείρισης και εποπτείας».\n"
            "2. Τις διατάξεις του π.δ. 80/2016 «Ανάληψη υποχρεώσεων από τους Διατάκτες».\n"
            "3. Το με αρ. πρωτ. " + proto + " πρωτογενές αίτημα της υπηρεσίας.\n"
            "4. Την ύπαρξη διαθέσιμης πίστωσης στον προϋπολογισμό του οικονομικού έτους 2024.\n\n"
            "## Αποφασίζουμε\n\nΤην ανάληψη υποχρέωσης ύψους " + amount + " € σε βάρος του ΚΑΕ " + kae +
            " του προϋπολογισμού οικονομικού έτους 2024 για " + purpose + "." + sign;
        break;
    case 1:
        r.subject = "Απευθείας ανάθεση για " + purpose;
        r.decision_type_id = "Δ.1";
        r.extra_field_values = {{"amountWithVAT", {{"amount", static_cast<double>(cents) / 100.0}, {"currency", "EUR"}}}};
        b = "# ΑΠΟΦΑΣΗ ΑΠΕΥΘΕΙΑΣ ΑΝΑΘΕΣΗΣ\n\n" + std::string("Ο ") + org.role + " της " + org.name +
            "\n\nΈχοντας υπόψη:\n\n1. Τις διατάξεις του ν. 4412/2016 «Δημόσιες Συμβάσεις Έργων, Προμηθειών και Υπηρεσιών».\n"
            "2. Την με αρ. πρωτ. " + proto + " απόφαση ανάληψης υποχρέωσης.\n"
            "3. Την οικονομική προσφορά του αναδόχου.\n\n"
            "## Αποφασίζουμε\n\nΑναθέτουμε απευθείας " + purpose + " έναντι συνολικού ποσού " + amount +
            " € συμπεριλαμβανομένου ΦΠΑ. Η δαπάνη θα βαρύνει τον ΚΑΕ " + kae + "." + sign;
        break;
    case 2:
        r.subject = "Έγκριση δαπάνης και διάθεση πίστωσης για " + purpose;
        r.decision_type_id = "Β.2.1";
        r.extra_field_values = {{"amountWithVAT", {{"amount", static_cast<double>(cents) / 100.0}, {"currency", "EUR"}}}};
        b = "# ΕΓΚΡΙΣΗ ΔΑΠΑΝΗΣ\n\nΤο Διοικητικό Συμβούλιο της " + std::string(org.name) +
            ", στη συνεδρίαση της " + std::to_string(1 + rng.below(28)) + "ης Μαρτίου 2024, αφού έλαβε υπόψη:\n\n"
            "1. Τις διατάξεις του ν. 4270/2014.\n2. Το με αρ. πρωτ. " + proto + " έγγραφο της αρμόδιας υπηρεσίας.\n\n"
            "## Αποφασίζει ομόφωνα\n\nΕγκρίνει τη δαπάνη και διαθέτει πίστωση ποσού " + amount + " ευρώ για " + purpose +
            " από τον ΚΑΕ " + kae + "." + sign;
        break;
    default:
        r.subject = "Ορισμός επιτροπής παραλαβής για " + purpose;
        r.decision_type_id = "2.4.7.1";
        b = "# ΟΡΙΣΜΟΣ ΕΠΙΤΡΟΠΗΣ\n\n" + std::string("Ο ") + org.role + " της " + org.name +
            "\n\nΈχοντας υπόψη:\n\n1. Τις διατάξεις του άρθρου 221 του ν. 4412/2016.\n"
            "2. Την ανάγκη παραλαβής για " + purpose + ".\n\n## Αποφασίζουμε\n\nΟρίζουμε τριμελή επιτροπή παραλαβής για " + purpose +
            " με θητεία έως 31-12-2024." + sign;
        break;
    }
    return {d, kind, purpose, kind == 3 ? 0 : cents};
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::cerr << "usage: make_fixture_corpus OUT_DIR [N_DOCS]\n";
        return 2;
    }
    const fs::path out = argv[1];
    const int n = argc > 2 ? std::stoi(argv[2]) : 60;
    fs::remove_all(out / "corpus");
    const CorpusLayout layout(out / "corpus");

    SplitMix64 rng(20240301);
    std::vector<Generated> docs;
    for (int i = 0; i < n; ++i) {
        docs.push_back(make_document(rng));
        store_document(layout, docs.back().doc);
    }

    std::ofstream pairs(out / "pairs.jsonl");
    int pair_id = 0;
    for (std::size_t i = 0; i < docs.size() && pair_id < 10; ++i) {
        for (std::size_t j = i + 1; j < docs.size(); ++j) {
            if (docs[i].kind == docs[j].kind && docs[i].doc.record.organization_id == docs[j].doc.record.organization_id) {
                pairs << nlohmann::json{{"pair_id", "p" + std::to_string(++pair_id)},
                                        {"ada_a", docs[i].doc.record.ada},
                                        {"ada_b", docs[j].doc.record.ada}}
                             .dump()
                      << "\n";
                break;
            }
        }
    }

    std::vector<QAPair> qa;
    for (const auto& g : docs) {
        if (g.kind == 3 || qa.size() >= 20) continue;
        qa.push_back({"Ποιο ποσό αφορά η απόφαση της " + *g.doc.record.organization_name + " για " + g.purpose + ";",
                      "Το ποσό είναι " + format_amount(g.cents) + " € (ΑΔΑ " + g.doc.record.ada + ").", g.doc.record.ada});
    }
    write_qa_pairs(out / "qa_pairs.jsonl", qa);
    std::cout << "wrote " << docs.size() << " documents, " << pair_id << " pairs, " << qa.size() << " QA pairs to " << out << "\n";
    return 0;
}
