#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "diavgeia/boilerplate.hpp"
#include "diavgeia/config.hpp"
#include "diavgeia/corpus.hpp"
#include "diavgeia/embedding.hpp"
#include "diavgeia/harvester.hpp"
#include "diavgeia/http.hpp"
#include "diavgeia/llm.hpp"
#include "diavgeia/qa.hpp"
#include "diavgeia/rag.hpp"
#include "diavgeia/search_index.hpp"
#include "diavgeia/textstats.hpp"
#include "diavgeia/utf8.hpp"

namespace fs = std::filesystem;
using namespace diavgeia;
using nlohmann::json;

namespace {

class UsageError : public Error {
  public:
    using Error::Error;
};

struct Context {
    Config cfg;

    bool json_output() const { return cfg.get("format") == "json"; }
    std::size_t workers() const { return static_cast<std::size_t>(std::max<long long>(1, cfg.get_int("workers"))); }
    std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

    void emit(const json& j, const std::string& table) const
    {
        if (json_output()) std::cout << j.dump(2) << "\n";
        else std::cout << table << (table.empty() || table.back() == '\n' ? "" : "\n");
    }
};

std::string llm_api_key()
{
    const char* key = std::getenv("DIAVGEIA_LLM_API_KEY");
    return key ? key : "";
}

std::shared_ptr<const ChatModel> make_chat_model(const Context& ctx)
{
    const auto& kind = ctx.cfg.get("generator");
    const auto key = llm_api_key();
    std::shared_ptr<const ChatModel> remote;
    if (!key.empty() || kind == "remote") {
        remote = std::make_shared<OpenAiChatModel>(ctx.cfg.get("llm_url"), ctx.cfg.get("llm_model"), key);
    }
    if (kind == "remote") return remote;
    if (kind == "replay") {
        return std::make_shared<ReplayingChatModel>(ctx.cfg.get("llm_model"),
                                                    std::make_shared<ReplayCache>(ctx.cfg.get("replay_dir")), remote);
    }
    throw UsageError("generator '" + kind + "' is not a chat model; use remote or replay");
}

std::unique_ptr<Generator> make_generator(const Context& ctx)
{
    const auto& kind = ctx.cfg.get("generator");
    const int cap = static_cast<int>(ctx.cfg.get_int("max_output_tokens"));
    if (kind == "echo") return std::make_unique<EchoGenerator>(cap);
    if (kind == "remote" || kind == "replay") return std::make_unique<ChatModelGenerator>(make_chat_model(ctx), cap);
    throw UsageError("unknown generator '" + kind + "'");
}

std::unique_ptr<Encoder> make_encoder(const Context& ctx)
{
    const auto& kind = ctx.cfg.get("encoder");
    if (kind == "reference") return std::make_unique<ReferenceEncoder>();
    if (kind == "remote") {
        const char* key = std::getenv("DIAVGEIA_ENCODER_API_KEY");
        return std::make_unique<RemoteEncoder>(ctx.cfg.get("encoder_url"), ctx.cfg.get("encoder_model"),
                                               static_cast<Eigen::Index>(ctx.cfg.get_int("encoder_dim")), key ? key : "");
    }
    throw UsageError("unknown encoder '" + kind + "'");
}

std::unique_ptr<SessionStore> make_session_store(const Context& ctx)
{
    const auto& url = ctx.cfg.get("session_store_url");
    if (!url.empty()) return std::make_unique<HttpKvSessionStore>(url);
    return std::make_unique<FileSessionStore>(ctx.cfg.get("sessions"));
}

CorpusLayout corpus_layout(const Context& ctx)
{
    const fs::path root = ctx.cfg.get("corpus");
    if (!fs::is_directory(root)) throw NotFound("corpus directory " + root.string() + " does not exist");
    return CorpusLayout(root);
}

struct BuiltIndex {
    SearchIndex index;
    std::size_t skipped = 0;
};

BuiltIndex build_index(const CorpusLayout& layout)
{
    BuiltIndex out;
    for (const auto& ada : layout.list_adas()) {
        try {
            out.index.index_document(load_document(layout, ada));
        } catch (const Error& e) {
            std::cerr << "warning: skipping " << ada << ": " << e.what() << "\n";
            ++out.skipped;
        }
    }
    return out;
}

/// The snapshot when it exists, otherwise built from the corpus.
SearchIndex open_index(const Context& ctx)
{
    const fs::path path = ctx.cfg.get("index");
    if (fs::exists(path)) return SearchIndex::load(path);
    if (ctx.cfg.origin("index") != "default") throw NotFound("index " + path.string() + " does not exist");
    return build_index(corpus_layout(ctx)).index;
}

std::function<std::string(const std::string&)> text_loader(const CorpusLayout& layout)
{
    return [layout](const std::string& ada) { return load_document(layout, ada).body_markdown; };
}

std::unique_ptr<Segmenter> make_segmenter(const Context& ctx, const std::string& kind)
{
    if (kind == "baseline") return std::make_unique<BaselineSegmenter>();
    if (kind == "llm") return std::make_unique<LlmSegmenter>(make_chat_model(ctx));
    throw UsageError("unknown segmenter '" + kind + "'");
}

std::unique_ptr<Classifier> make_classifier(const Context& ctx, const std::string& kind)
{
    if (kind == "baseline") return std::make_unique<BaselineClassifier>();
    if (kind == "llm") return std::make_unique<LlmClassifier>(make_chat_model(ctx));
    throw UsageError("unknown classifier '" + kind + "'");
}

std::vector<std::size_t> parse_k_list(const std::string& text)
{
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(item, &used);
            if (used != item.size() || v == 0) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("bad k value '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError("empty k list");
    return out;
}

// ---- commands --------------------------------------------------------------

struct HarvestArgs {
    std::string from, to, org, checkpoint, extractor;
    bool resume = false;
    std::size_t concurrency = 1;
};

int cmd_harvest(const Context& ctx, const HarvestArgs& a)
{
    HarvestJob job;
    job.date_from = a.from;
    job.date_to = a.to;
    if (!a.org.empty()) job.organization = a.org;
    job.rate_limit = ctx.cfg.get_double("rps");
    job.page_size = static_cast<std::size_t>(ctx.cfg.get_int("page_size"));
    job.concurrency = a.concurrency;
    job.resume = a.resume;
    const fs::path corpus = ctx.cfg.get("corpus");
    job.checkpoint_path = a.checkpoint.empty() ? fs::path(corpus.string() + ".checkpoint.json") : fs::path(a.checkpoint);
    job.validate();
    if (!job.resume) fs::remove(job.checkpoint_path);

    fs::create_directories(corpus);
    SystemClock clock;
    ApiEndpoints endpoints;
    endpoints.extractor_command = a.extractor;
    ApiClient client(ctx.cfg.get("api_base"), clock, job.rate_limit, endpoints);
    const auto report = run_harvest(job, client, CorpusLayout(corpus));

    json j = {{"pages_fetched", report.pages_fetched},
              {"documents_stored", report.documents_stored},
              {"complete", report.complete},
              {"checkpoint", to_json(report.checkpoint, job)}};
    std::ostringstream t;
    t << "pages fetched: " << report.pages_fetched << "\ndocuments stored: " << report.documents_stored
      << "\nfailures: " << report.checkpoint.failures.size() << "\ncomplete: " << (report.complete ? "yes" : "no") << "\n";
    ctx.emit(j, t.str());
    return report.complete ? 0 : 1;
}

int cmd_stats(const Context& ctx)
{
    ReferenceTokenizer tokenizer;
    const auto stats = compute_corpus_stats(corpus_layout(ctx), ctx.workers(), tokenizer);
    ctx.emit(to_json(stats), render_table(stats));
    return 0;
}

int cmd_index_build(const Context& ctx)
{
    const auto built = build_index(corpus_layout(ctx));
    const fs::path out = ctx.cfg.get("index");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    built.index.save(out);
    ctx.emit({{"documents", built.index.size()}, {"skipped", built.skipped}, {"index", out.string()}},
             "indexed " + std::to_string(built.index.size()) + " documents into " + out.string());
    return 0;
}

int cmd_index_search(const Context& ctx, const std::string& query, std::size_t k)
{
    const auto index = SearchIndex::load(ctx.cfg.get("index"));
    const auto hits = index.search(query, k);
    json j = json::array();
    std::ostringstream t;
    for (const auto& h : hits) {
        j.push_back({{"ada", h.ada}, {"score", h.score}, {"excerpt", h.excerpt}});
        t << h.ada << "\t" << h.score << "\t" << std::string(utf8::prefix(h.excerpt, 80)) << "\n";
    }
    ctx.emit(j, hits.empty() ? "no hits" : t.str());
    return 0;
}

int cmd_embed(const Context& ctx)
{
    const auto encoder = make_encoder(ctx);
    const auto result = embed_corpus(corpus_layout(ctx), *encoder, ctx.workers());
    const fs::path out = ctx.cfg.get("vectors");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_vector_store(result.store, out);
    json failures = json::array();
    for (const auto& f : result.failures) failures.push_back({{"ada", f.ada}, {"message", f.message}});
    ctx.emit({{"vectors", result.store.size()}, {"dimension", result.store.dim()}, {"failures", failures}},
             "embedded " + std::to_string(result.store.size()) + " documents (" + std::to_string(result.failures.size()) +
                 " failures) into " + out.string());
    return 0;
}

int cmd_cluster(const Context& ctx, int k, int max_iterations)
{
    const auto store = load_vector_store(ctx.cfg.get("vectors"));
    const auto a = kmeans(store, k, ctx.seed(), max_iterations);
    auto j = to_json(a, store.adas());
    std::ostringstream t;
    t << "k=" << a.k << " inertia=" << a.inertia << " iterations=" << a.iterations << (a.converged ? " (converged)" : "") << "\n";
    t << "cluster\tsize\tcentroid document\n";
    json centroids = json::array();
    for (int c = 0; c < a.k; ++c) {
        const auto members = a.members(c);
        std::string centre = "-";
        if (!members.empty()) centre = centroid_document(a, c, store);
        centroids.push_back({{"cluster", c}, {"size", members.size()}, {"centroid_document", centre}});
        t << c << "\t" << members.size() << "\t" << centre << "\n";
    }
    j["centroid_documents"] = centroids;
    ctx.emit(j, t.str());
    return 0;
}

int cmd_disthist(const Context& ctx, std::size_t sample, std::size_t bins)
{
    const auto store = load_vector_store(ctx.cfg.get("vectors"));
    sample = std::min(sample, static_cast<std::size_t>(store.size()));
    const auto h = pairwise_distance_histogram(store, sample, bins, ctx.seed());
    std::ostringstream t;
    t << "distance bin\tpairs\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        t << "[" << h.lower + h.bin_width() * static_cast<double>(b) << ", " << h.lower + h.bin_width() * static_cast<double>(b + 1)
          << ")\t" << h.counts[b] << "\n";
    }
    ctx.emit(to_json(h), t.str());
    return 0;
}

int cmd_boiler_segment(const Context& ctx, const std::string& ada, std::size_t n_neighbors, const std::string& segmenter_kind)
{
    const auto layout = corpus_layout(ctx);
    const auto store = load_vector_store(ctx.cfg.get("vectors"));
    const auto load = text_loader(layout);
    std::vector<std::string> neighbors;
    for (const auto& n : neighbors_of(store, ada, n_neighbors)) neighbors.push_back(load(n.ada));
    const auto segmenter = make_segmenter(ctx, segmenter_kind);
    const auto text = load(ada);
    auto seg = segmenter->segment(text, neighbors);
    seg.ada = ada;
    const auto words = tokenize_words(text);
    std::ostringstream t;
    for (const auto& s : seg.spans) {
        t << (s.label == SpanLabel::Boilerplate ? "[BP] " : "[CT] ") << join_words(words, s.start, s.end) << "\n";
    }
    ctx.emit(to_json(seg), t.str());
    return 0;
}

int cmd_boiler_swap(const Context& ctx, const std::string& pairs_file, std::size_t synthetic, const std::string& segmenter_kind)
{
    std::vector<DocumentPair> pairs;
    if (!pairs_file.empty()) {
        pairs = read_pair_file(pairs_file, text_loader(corpus_layout(ctx)));
    } else if (synthetic > 0) {
        for (auto& tp : generate_template_pairs(synthetic, ctx.seed())) pairs.push_back(std::move(tp.pair));
    } else {
        throw UsageError("swap-eval needs --pairs FILE or --synthetic N");
    }
    const auto segmenter = make_segmenter(ctx, segmenter_kind);
    const auto report = run_swap_evaluation(pairs, *segmenter, ctx.workers());
    ctx.emit(to_json(report), render_table(report));
    return report.failures.empty() ? 0 : 1;
}

int cmd_boiler_prevalence(const Context& ctx, const std::string& k_list, std::size_t n_neighbors, double threshold,
                          const std::string& csv, const std::string& classifier_kind)
{
    const auto store = load_vector_store(ctx.cfg.get("vectors"));
    const auto classifier = make_classifier(ctx, classifier_kind);
    PrevalenceOptions opts;
    opts.n_neighbors = n_neighbors;
    opts.threshold = threshold;
    opts.seed = ctx.seed();
    const auto report = prevalence_study(store, text_loader(corpus_layout(ctx)), parse_k_list(k_list), *classifier, opts);
    if (!csv.empty()) write_prevalence_csv(report, csv);
    std::ostringstream t;
    t << "k\tclusters\tclassified\tboilerplate\tfailures\trate\n";
    for (const auto& r : report.per_k) {
        t << r.k << "\t" << r.clusters << "\t" << r.classified << "\t" << r.boilerplate << "\t" << r.failures << "\t" << r.rate << "\n";
    }
    ctx.emit(to_json(report), t.str());
    return 0;
}

int cmd_serve(const Context& ctx, const std::string& port_file)
{
    const auto index = open_index(ctx);
    IndexRetriever retriever(index);
    const auto generator = make_generator(ctx);
    const auto store = make_session_store(ctx);
    RagOptions opts;
    opts.k = static_cast<std::size_t>(ctx.cfg.get_int("k"));
    RagService service(retriever, *generator, *store, opts);

    httplib::Server server;
    mount_http_api(server, service);
    const auto& host = ctx.cfg.get("host");
    int port = static_cast<int>(ctx.cfg.get_int("port"));
    if (port == 0) port = server.bind_to_any_port(host);
    else if (!server.bind_to_port(host, port)) port = -1;
    if (port <= 0) throw IoError("cannot bind " + host + ":" + ctx.cfg.get("port"));
    if (!port_file.empty()) std::ofstream(port_file) << port << "\n";
    std::cerr << "serving " << index.size() << " documents on http://" << host << ":" << port << " with generator "
              << generator->name() << "\n";
    server.listen_after_bind();
    return 0;
}

int cmd_ask(const Context& ctx, const std::string& question, std::string session_id, const std::string& mode)
{
    const auto index = open_index(ctx);
    IndexRetriever retriever(index);
    const auto generator = make_generator(ctx);
    const auto store = make_session_store(ctx);
    RagOptions opts;
    opts.k = static_cast<std::size_t>(ctx.cfg.get_int("k"));
    RagService service(retriever, *generator, *store, opts);
    if (session_id.empty()) session_id = service.create_session().session_id;

    AnswerMode m = AnswerMode::Streaming;
    if (mode == "structured") m = AnswerMode::Structured;
    else if (mode != "streaming") throw UsageError("mode must be streaming or structured");

    const bool stream_to_stdout = !ctx.json_output() && m == AnswerMode::Streaming;
    const auto answer = service.ask(session_id, question, m, [&](std::string_view delta) {
        if (stream_to_stdout) std::cout << delta << std::flush;
    });
    if (stream_to_stdout) {
        std::cout << "\n";
        if (!answer.cited_adas.empty()) {
            std::cout << "\nΑΔΑ:";
            for (const auto& c : answer.cited_adas) std::cout << " " << c;
            std::cout << "\n";
        }
        std::cerr << "session: " << session_id << "\n";
        return 0;
    }
    auto j = to_json(answer);
    j["session_id"] = session_id;
    std::string text = answer.text;
    if (answer.structured) text += "\n\n" + answer.structured->detailed_explanation;
    ctx.emit(j, text + "\nsession: " + session_id);
    return 0;
}

int cmd_eval_generate(const Context& ctx, std::size_t sample, const std::string& out)
{
    const auto model = make_chat_model(ctx);
    const auto report = generate_qa_pairs(corpus_layout(ctx), sample, *model, ctx.seed(), ctx.workers());
    write_qa_pairs(out, report.pairs);
    json skipped = json::array();
    for (const auto& s : report.skipped) skipped.push_back({{"ada", s.ada}, {"reason", s.reason}});
    ctx.emit({{"pairs", report.pairs.size()}, {"skipped", skipped}, {"out", out}},
             "wrote " + std::to_string(report.pairs.size()) + " pairs to " + out + " (" + std::to_string(report.skipped.size()) +
                 " skipped)");
    return 0;
}

int cmd_eval_auto(const Context& ctx, const std::string& pairs_file, double threshold)
{
    const auto pairs = read_qa_pairs(pairs_file);
    const auto index = open_index(ctx);
    IndexRetriever retriever(index);
    const auto generator = make_generator(ctx);
    const auto encoder = make_encoder(ctx);
    const auto store = make_session_store(ctx);
    RagOptions opts;
    opts.k = static_cast<std::size_t>(ctx.cfg.get_int("k"));
    RagService service(retriever, *generator, *store, opts);
    const auto df = index.stats();
    const auto report = evaluate_automated(
        pairs, [&](const QAPair& p) { return service.ask(service.create_session().session_id, p.question).text; }, *encoder,
        &df, threshold, ctx.workers());
    ctx.emit(to_json(report), render_table(report));
    return 0;
}

int cmd_eval_manual(const Context& ctx, const std::string& results_file, double printed)
{
    std::vector<ManualOrgResult> results;
    std::optional<double> printed_accuracy;
    if (results_file.empty()) {
        results = published_manual_results();
        printed_accuracy = kPublishedManualAccuracy;
    } else {
        std::ifstream in(results_file);
        if (!in) throw NotFound("cannot open " + results_file);
        const auto j = json::parse(in);
        results = manual_results_from_json(j.is_object() ? j.at("manual") : j);
    }
    if (printed >= 0) printed_accuracy = printed;
    const auto summary = score_manual(results, printed_accuracy);
    ctx.emit(to_json(summary), render_table(summary));
    return 0;
}

int cmd_eval_fixtures(const Context& ctx)
{
    const auto report = verify_aggregation_fixtures();
    ctx.emit(to_json(report), render_table(report));
    return 0;
}

std::string error_class(const std::exception& e)
{
    if (dynamic_cast<const NotFound*>(&e)) return "NotFound";
    if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
    if (dynamic_cast<const CorruptRecord*>(&e)) return "CorruptRecord";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    if (dynamic_cast<const RetrievalFailed*>(&e)) return "RetrievalFailed";
    if (dynamic_cast<const GenerationFailed*>(&e)) return "GenerationFailed";
    if (dynamic_cast<const RemoteError*>(&e)) return "RemoteError";
    if (dynamic_cast<const HttpError*>(&e)) return "HttpError";
    if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
    if (dynamic_cast<const EmptyIndex*>(&e)) return "EmptyIndex";
    if (dynamic_cast<const EmptyStore*>(&e)) return "EmptyStore";
    if (dynamic_cast<const InvalidSample*>(&e)) return "InvalidSample";
    if (dynamic_cast<const MalformedResult*>(&e)) return "MalformedResult";
    if (dynamic_cast<const Error*>(&e)) return "Error";
    return "InternalError";
}

void report_error(bool as_json, const std::string& kind, const std::string& message)
{
    if (as_json) std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    else std::cerr << "error: " << message << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Diavgeia corpus pipeline: harvest, statistics, search, embeddings, boilerplate study, RAG service "
                 "and evaluation."};
    app.name("diavgeia");
    app.require_subcommand(1);
    app.fallthrough();

    std::map<std::string, std::string> flags;
    std::string config_file;
    app.add_option("--config", config_file, "JSON config file (file < env < flags)");
    auto bind = [&](CLI::App* where, const std::string& names, const std::string& key) {
        const auto& keys = config_keys();
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
        where->add_option_function<std::string>(
            names, [&flags, key](const std::string& v) { flags[key] = v; },
            it->help + " [config: " + key + ", env: " + Config::env_name(key) + ", default: " + it->default_value + "]");
    };
    bind(&app, "--format", "format");
    bind(&app, "--workers", "workers");
    bind(&app, "--seed", "seed");
    bind(&app, "--generator", "generator");
    bind(&app, "--encoder", "encoder");

    std::function<int(const Context&)> action;

    // harvest
    HarvestArgs harvest;
    auto* h = app.add_subcommand("harvest", "Harvest decisions from the OpenData API into a corpus");
    h->add_option("--from", harvest.from, "first issue date, YYYY-MM-DD")->required();
    h->add_option("--to", harvest.to, "last issue date, YYYY-MM-DD")->required();
    h->add_option("--org", harvest.org, "organization id");
    bind(h, "--rps", "rps");
    bind(h, "--out", "corpus");
    bind(h, "--page-size", "page_size");
    h->add_flag("--resume", harvest.resume, "continue from the checkpoint");
    h->add_option("--checkpoint", harvest.checkpoint, "checkpoint file (default: <out>.checkpoint.json)");
    h->add_option("--concurrency", harvest.concurrency, "parallel document fetches per page");
    h->add_option("--extractor", harvest.extractor, "PDF text extractor command with {input}");
    h->callback([&] { action = [&](const Context& c) { return cmd_harvest(c, harvest); }; });

    // stats
    auto* st = app.add_subcommand("stats", "Corpus statistics");
    bind(st, "--corpus", "corpus");
    st->callback([&] { action = cmd_stats; });

    // index
    auto* ix = app.add_subcommand("index", "BM25 index");
    ix->require_subcommand(1);
    auto* ixb = ix->add_subcommand("build", "Build an index snapshot from a corpus");
    bind(ixb, "--corpus", "corpus");
    bind(ixb, "--out", "index");
    ixb->callback([&] { action = cmd_index_build; });
    std::string query;
    std::size_t k_hits = 8;
    auto* ixs = ix->add_subcommand("search", "Query an index snapshot");
    bind(ixs, "--index", "index");
    ixs->add_option("--query", query, "query text")->required();
    ixs->add_option("-k", k_hits, "number of hits");
    ixs->callback([&] { action = [&](const Context& c) { return cmd_index_search(c, query, k_hits); }; });

    // embeddings
    auto* em = app.add_subcommand("embed", "Embed every document of a corpus");
    bind(em, "--corpus", "corpus");
    bind(em, "--out", "vectors");
    em->callback([&] { action = cmd_embed; });

    int k_clusters = 0;
    int max_iterations = 100;
    auto* cl = app.add_subcommand("cluster", "k-means over a vector store");
    bind(cl, "--vectors", "vectors");
    cl->add_option("-k", k_clusters, "number of clusters")->required()->check(CLI::PositiveNumber);
    cl->add_option("--max-iterations", max_iterations, "assignment steps");
    cl->callback([&] { action = [&](const Context& c) { return cmd_cluster(c, k_clusters, max_iterations); }; });

    std::size_t sample = 1000;
    std::size_t bins = 40;
    auto* dh = app.add_subcommand("disthist", "Pairwise cosine-distance histogram");
    bind(dh, "--vectors", "vectors");
    dh->add_option("--sample", sample, "sampled vectors");
    dh->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
    dh->callback([&] { action = [&](const Context& c) { return cmd_disthist(c, sample, bins); }; });

    // boilerplate
    auto* bp = app.add_subcommand("boiler", "Boilerplate study");
    bp->require_subcommand(1);
    std::string seg_ada, segmenter_kind = "baseline";
    std::size_t n_neighbors = 5;
    auto* bps = bp->add_subcommand("segment", "Segment one document against its nearest neighbours");
    bind(bps, "--corpus", "corpus");
    bind(bps, "--vectors", "vectors");
    bps->add_option("--ada", seg_ada, "document to segment")->required();
    bps->add_option("--neighbors", n_neighbors, "neighbours used as templates");
    bps->add_option("--segmenter", segmenter_kind, "baseline or llm");
    bps->callback([&] { action = [&](const Context& c) { return cmd_boiler_segment(c, seg_ada, n_neighbors, segmenter_kind); }; });

    std::string pairs_file;
    std::size_t synthetic = 0;
    auto* bpw = bp->add_subcommand("swap-eval", "Template/content swap evaluation");
    bind(bpw, "--corpus", "corpus");
    bpw->add_option("--pairs", pairs_file, "pair file, JSON lines {pair_id, ada_a, ada_b}");
    bpw->add_option("--synthetic", synthetic, "generate this many template pairs instead");
    bpw->add_option("--segmenter", segmenter_kind, "baseline or llm");
    bpw->callback([&] { action = [&](const Context& c) { return cmd_boiler_swap(c, pairs_file, synthetic, segmenter_kind); }; });

    std::string k_list = "10,20,50", csv, classifier_kind = "baseline";
    double threshold = 0.5;
    auto* bpp = bp->add_subcommand("prevalence", "Boilerplate prevalence over cluster centroids");
    bind(bpp, "--corpus", "corpus");
    bind(bpp, "--vectors", "vectors");
    bpp->add_option("--k", k_list, "comma-separated cluster counts");
    bpp->add_option("--neighbors", n_neighbors, "neighbours shown to the classifier");
    bpp->add_option("--threshold", threshold, "likelihood threshold");
    bpp->add_option("--csv", csv, "write per-centroid rows here");
    bpp->add_option("--classifier", classifier_kind, "baseline or llm");
    bpp->callback([&] {
        action = [&](const Context& c) { return cmd_boiler_prevalence(c, k_list, n_neighbors, threshold, csv, classifier_kind); };
    });

    // service
    std::string port_file;
    auto* sv = app.add_subcommand("serve", "Run the chat HTTP API");
    bind(sv, "--index", "index");
    bind(sv, "--corpus", "corpus");
    bind(sv, "--port", "port");
    bind(sv, "--host", "host");
    bind(sv, "--sessions", "sessions");
    sv->add_option("--port-file", port_file, "write the bound port here");
    sv->callback([&] { action = [&](const Context& c) { return cmd_serve(c, port_file); }; });

    std::string question, session_id, mode = "streaming";
    auto* ask = app.add_subcommand("ask", "Ask one question");
    bind(ask, "--index", "index");
    bind(ask, "--corpus", "corpus");
    bind(ask, "--sessions", "sessions");
    ask->add_option("--question", question, "question text")->required();
    ask->add_option("--session", session_id, "continue this session");
    ask->add_option("--mode", mode, "streaming or structured");
    ask->callback([&] { action = [&](const Context& c) { return cmd_ask(c, question, session_id, mode); }; });

    // evaluation
    auto* ev = app.add_subcommand("eval", "QA evaluation");
    ev->require_subcommand(1);
    std::size_t qa_sample = 500;
    std::string qa_out = "qa_pairs.jsonl";
    auto* evg = ev->add_subcommand("generate", "Generate QA pairs from a corpus sample");
    bind(evg, "--corpus", "corpus");
    evg->add_option("--sample", qa_sample, "documents to sample");
    evg->add_option("--out", qa_out, "pair file to write");
    evg->callback([&] { action = [&](const Context& c) { return cmd_eval_generate(c, qa_sample, qa_out); }; });

    double eq_threshold = 70.0;
    auto* eva = ev->add_subcommand("auto", "Automated evaluation of the answer pipeline");
    eva->add_option("--pairs", pairs_file, "QA pair file")->required();
    bind(eva, "--index", "index");
    bind(eva, "--corpus", "corpus");
    bind(eva, "--sessions", "sessions");
    eva->add_option("--threshold", eq_threshold, "semantic equivalence threshold");
    eva->callback([&] { action = [&](const Context& c) { return cmd_eval_auto(c, pairs_file, eq_threshold); }; });

    std::string results_file;
    double printed = -1;
    auto* evm = ev->add_subcommand("manual", "Score manual verdicts (default: the published study)");
    evm->add_option("--results", results_file, "verdict file");
    evm->add_option("--printed", printed, "published overall accuracy to compare against");
    evm->callback([&] { action = [&](const Context& c) { return cmd_eval_manual(c, results_file, printed); }; });

    auto* evf = ev->add_subcommand("fixtures", "Re-check the published aggregation arithmetic");
    evf->callback([&] { action = cmd_eval_fixtures; });

    auto* cf = app.add_subcommand("config", "Show the resolved configuration");
    for (const auto& key : config_keys()) bind(cf, "--" + key.name, key.name);
    cf->callback([&] {
        action = [](const Context& c) {
            const auto resolved = c.cfg.to_json();
            std::ostringstream t;
            for (const auto& [k, v] : resolved.items()) t << k << " = " << v.at("value").get<std::string>() << "  (" << v.at("origin").get<std::string>() << ")\n";
            c.emit(resolved, t.str());
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    bool as_json = false;
    try {
        Context ctx;
        if (!config_file.empty()) ctx.cfg.merge_file(config_file);
        ctx.cfg.merge_env([](const char* name) { return std::getenv(name); });
        for (const auto& [k, v] : flags) ctx.cfg.set(k, v);
        as_json = ctx.json_output();
        if (ctx.cfg.get("format") != "json" && ctx.cfg.get("format") != "table") throw UsageError("format must be json or table");
        return action(ctx);
    } catch (const ConfigError& e) {
        report_error(as_json, "ConfigError", e.what());
        return 2;
    } catch (const UsageError& e) {
        report_error(as_json, "UsageError", e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error(as_json, error_class(e), e.what());
        return 1;
    }
}
