#include "diavgeia/embedding.hpp"

#include <fstream>
#include <limits>
#include <map>

#include "diavgeia/analyzer.hpp"
#include "diavgeia/binary_io.hpp"
#include "diavgeia/parallel.hpp"
#include "diavgeia/utf8.hpp"

namespace diavgeia {

namespace {
constexpr std::string_view kMagic = "DVEC";
constexpr std::uint32_t kVersion = 1;
}  // namespace

ReferenceEncoder::ReferenceEncoder(Eigen::Index dimension, std::uint64_t seed, int ngram)
    : dim_(dimension), seed_(seed), ngram_(ngram)
{
    if (dim_ <= 0 || ngram_ <= 0) throw InvalidArgument("encoder dimension and n-gram size must be positive");
}

Eigen::VectorXd ReferenceEncoder::encode(std::string_view text) const
{
    // Folded text with whitespace runs collapsed to one space, padded.
    std::u32string folded = U" ";
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = utf8::next(text, pos);
        if (utf8::is_space(cp)) {
            if (folded.back() != U' ') folded.push_back(U' ');
        } else {
            folded.push_back(fold_greek(cp));
        }
    }
    if (folded.back() != U' ') folded.push_back(U' ');

    std::map<std::uint64_t, std::int64_t> counts;
    const auto n = static_cast<std::size_t>(ngram_);
    if (folded.size() > 1) {
        for (std::size_t i = 0; i + n <= folded.size(); ++i) {
            ++counts[fnv1a64(utf8::encode(std::u32string_view(folded).substr(i, n)))];
        }
    }

    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
    for (const auto& [hash, count] : counts) {
        std::uint64_t state = hash ^ seed_;
        std::uint64_t bits = 0;
        for (Eigen::Index j = 0; j < dim_; ++j) {
            if (j % 64 == 0) bits = splitmix64(state);
            v(j) += (bits & 1) ? static_cast<double>(count) : -static_cast<double>(count);
            bits >>= 1;
        }
    }
    return v;
}

void save_vector_store(const VectorStoreF& store, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write vector store " + path.string());
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    binio::write_le(out, kVersion);
    binio::write_le(out, static_cast<std::uint32_t>(store.dim()));
    binio::write_le(out, static_cast<std::uint64_t>(store.size()));
    for (const auto& ada : store.adas()) binio::write_str(out, ada);
    const auto m = store.matrix();
    for (Eigen::Index i = 0; i < store.size(); ++i) {
        for (Eigen::Index j = 0; j < store.dim(); ++j) binio::write_f32(out, m(j, i));
    }
    if (!out) throw IoError("short write to " + path.string());
}

VectorStoreF load_vector_store(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open vector store " + path.string());
    binio::expect_magic(in, kMagic);
    const auto version = binio::read_le<std::uint32_t>(in);
    if (version != kVersion) throw CorruptRecord("unsupported vector store version " + std::to_string(version));
    const auto dim = static_cast<Eigen::Index>(binio::read_le<std::uint32_t>(in));
    const auto count = binio::read_le<std::uint64_t>(in);
    std::vector<std::string> adas;
    adas.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) adas.push_back(binio::read_str(in));
    VectorStoreF store(dim);
    Eigen::VectorXf v(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) v(j) = binio::read_f32(in);
        if (!v.allFinite()) throw CorruptRecord("non-finite vector for " + adas[i]);
        store.add_unit(std::move(adas[i]), v);
    }
    return store;
}

EmbedResult embed_corpus(const CorpusLayout& layout, const Encoder& encoder, std::size_t workers)
{
    const auto adas = layout.list_adas();
    std::vector<Eigen::VectorXd> vectors(adas.size());
    std::vector<std::string> errors(adas.size());
    parallel_for(adas.size(), workers, [&](std::size_t i) {
        try {
            const auto doc = load_document(layout, adas[i]);
            const auto& text = doc.body_markdown.empty() ? doc.record.subject : doc.body_markdown;
            auto v = encoder.encode(text);
            if (v.size() != encoder.dimension()) throw EncoderError("encoder returned wrong dimension");
            vectors[i] = normalized(v);
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty()) errors[i] = "encoding failed";
        }
    }, 8);

    EmbedResult result{VectorStoreF(encoder.dimension()), {}};
    for (std::size_t i = 0; i < adas.size(); ++i) {
        if (!errors[i].empty()) {
            result.failures.push_back({adas[i], errors[i]});
        } else {
            result.store.add_unit(adas[i], vectors[i]);
        }
    }
    return result;
}

std::int64_t DistanceHistogram::total() const noexcept
{
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

std::vector<Eigen::Index> sample_indices(Eigen::Index n, std::size_t count, std::uint64_t seed)
{
    if (static_cast<Eigen::Index>(count) > n) throw InvalidArgument("sample larger than population");
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    SplitMix64 rng(seed);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

template <typename Scalar>
DistanceHistogram pairwise_distance_histogram(const VectorStore<Scalar>& store, std::size_t sample_size,
                                              std::size_t bins, std::uint64_t seed)
{
    if (bins == 0) throw InvalidArgument("bins must be >= 1");
    const auto idx = sample_indices(store.size(), sample_size, seed);
    Matrix<double> sample(store.dim(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
        sample.col(static_cast<Eigen::Index>(c)) = store.vector(idx[c]).template cast<double>();
    }
    const Matrix<double> gram = sample.transpose() * sample;

    DistanceHistogram hist;
    hist.counts.assign(bins, 0);
    hist.sample_size = idx.size();
    const double width = hist.bin_width();
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
            const double d = std::clamp(1.0 - gram(i, j), 0.0, 2.0);
            const auto bin = std::min(bins - 1, static_cast<std::size_t>(d / width));
            ++hist.counts[bin];
        }
    }
    return hist;
}

std::vector<Eigen::Index> ClusterAssignment::members(int cluster) const
{
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == cluster) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
}

template <typename Scalar>
ClusterAssignment kmeans(const VectorStore<Scalar>& store, int k, std::uint64_t seed, int max_iterations)
{
    const Eigen::Index n = store.size();
    if (k < 1 || k > n) throw InvalidK("k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    const Matrix<double> x = store.matrix().template cast<double>();
    const Eigen::Index dim = x.rows();

    // k-means++ seeding.
    SplitMix64 rng(seed);
    ClusterAssignment out;
    out.k = k;
    out.centroids.resize(dim, k);
    out.centroids.col(0) = x.col(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd nearest = (x.colwise() - out.centroids.col(0)).colwise().squaredNorm().transpose();
    for (int c = 1; c < k; ++c) {
        const double total = nearest.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += nearest(i);
                if (acc > target && nearest(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        out.centroids.col(c) = x.col(pick);
        nearest = nearest.cwiseMin((x.colwise() - out.centroids.col(c)).colwise().squaredNorm().transpose());
    }

    out.assignments.assign(static_cast<std::size_t>(n), -1);
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int iter = 0; iter < max_iterations; ++iter) {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.col(i) - out.centroids.col(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            next[static_cast<std::size_t>(i)] = best;
            inertia += best_d;
        }
        out.inertia_history.push_back(inertia);
        out.inertia = inertia;
        out.iterations = iter + 1;
        if (next == out.assignments) {
            out.converged = true;
            break;
        }
        out.assignments = next;

        Matrix<double> sums = Matrix<double>::Zero(dim, k);
        std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = out.assignments[static_cast<std::size_t>(i)];
            sums.col(c) += x.col(i);
            ++sizes[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] > 0) {
                out.centroids.col(c) = sums.col(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
            }
        }
    }
    return out;
}

template <typename Scalar>
std::string centroid_document(const ClusterAssignment& assignment, int cluster, const VectorStore<Scalar>& store)
{
    if (cluster < 0 || cluster >= assignment.k) throw InvalidArgument("cluster id out of range");
    const auto members = assignment.members(cluster);
    if (members.empty()) throw EmptyCluster("cluster " + std::to_string(cluster) + " has no members");
    const Eigen::VectorXd centroid = assignment.centroids.col(cluster);
    const std::string* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto i : members) {
        const double d = (store.vector(i).template cast<double>() - centroid).squaredNorm();
        if (d < best_d || (d == best_d && store.ada(i) < *best)) {
            best_d = d;
            best = &store.ada(i);
        }
    }
    return *best;
}

nlohmann::json to_json(const DistanceHistogram& hist)
{
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        bins.push_back({{"lower", hist.lower + hist.bin_width() * static_cast<double>(b)},
                        {"upper", hist.lower + hist.bin_width() * static_cast<double>(b + 1)},
                        {"count", hist.counts[b]}});
    }
    return {{"sample_size", hist.sample_size}, {"pairs", hist.total()}, {"bins", bins}};
}

nlohmann::json to_json(const ClusterAssignment& a, const std::vector<std::string>& adas)
{
    nlohmann::json assign = nlohmann::json::object();
    for (std::size_t i = 0; i < a.assignments.size() && i < adas.size(); ++i) assign[adas[i]] = a.assignments[i];
    return {{"k", a.k},
            {"inertia", a.inertia},
            {"iterations", a.iterations},
            {"converged", a.converged},
            {"inertia_history", a.inertia_history},
            {"assignments", assign}};
}

template DistanceHistogram pairwise_distance_histogram(const VectorStore<float>&, std::size_t, std::size_t, std::uint64_t);
template DistanceHistogram pairwise_distance_histogram(const VectorStore<double>&, std::size_t, std::size_t, std::uint64_t);
template ClusterAssignment kmeans(const VectorStore<float>&, int, std::uint64_t, int);
template ClusterAssignment kmeans(const VectorStore<double>&, int, std::uint64_t, int);
template std::string centroid_document(const ClusterAssignment&, int, const VectorStore<float>&);
template std::string centroid_document(const ClusterAssignment&, int, const VectorStore<double>&);

}  // namespace diavgeia
