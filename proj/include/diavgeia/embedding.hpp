#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "diavgeia/corpus.hpp"
#include "diavgeia/errors.hpp"
#include "diavgeia/hashing.hpp"

namespace diavgeia {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class EmptyStore : public Error {
  public:
    using Error::Error;
};
class InvalidK : public Error {
  public:
    using Error::Error;
};
class EmptyCluster : public Error {
  public:
    using Error::Error;
};
class EncoderError : public Error {
  public:
    using Error::Error;
};

/// Text to fixed-length dense vector. Deterministic and thread-safe.
class Encoder {
  public:
    virtual ~Encoder() = default;
    virtual Eigen::Index dimension() const noexcept = 0;
    virtual Eigen::VectorXd encode(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Seeded random projection of character n-gram counts. Each distinct n-gram
/// of the case- and accent-folded text contributes count * r, where r is a
/// ±1 vector drawn from splitmix64 seeded with fnv1a64(ngram) ^ seed.
class ReferenceEncoder final : public Encoder {
  public:
    explicit ReferenceEncoder(Eigen::Index dimension = 128, std::uint64_t seed = 0x5eedULL, int ngram = 3);

    Eigen::Index dimension() const noexcept override { return dim_; }
    Eigen::VectorXd encode(std::string_view text) const override;
    std::string name() const override { return "reference"; }

  private:
    Eigen::Index dim_;
    std::uint64_t seed_;
    int ngram_;
};

/// OpenAI-compatible `/v1/embeddings` client.
class RemoteEncoder final : public Encoder {
  public:
    RemoteEncoder(std::string base_url, std::string model, Eigen::Index dimension, std::string api_key = {});

    Eigen::Index dimension() const noexcept override { return dim_; }
    Eigen::VectorXd encode(std::string_view text) const override;
    std::string name() const override { return "remote:" + model_; }

  private:
    std::string base_url_;
    std::string model_;
    Eigen::Index dim_;
    std::string api_key_;
};

/// Unit-length copy of `v`. Throws InvalidArgument on zero or non-finite input.
template <typename Derived>
auto normalized(const Eigen::MatrixBase<Derived>& v)
{
    using Scalar = typename Derived::Scalar;
    const Scalar n = v.norm();
    if (!std::isfinite(static_cast<double>(n)) || n == Scalar(0) || !v.allFinite()) {
        throw InvalidArgument("cannot normalize a zero or non-finite vector");
    }
    return Vector<Scalar>(v / n);
}

/// 1 - cos(u, v); for unit vectors this is 1 - u·v and lies in [0, 2].
template <typename DerivedA, typename DerivedB>
double cosine_distance(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v)
{
    const double nu = static_cast<double>(u.norm());
    const double nv = static_cast<double>(v.norm());
    if (nu == 0.0 || nv == 0.0) return 1.0;
    const double cos = static_cast<double>(u.dot(v)) / (nu * nv);
    return 1.0 - std::clamp(cos, -1.0, 1.0);
}

/// Unit vectors keyed by ADA, stored column-wise in a dim x n matrix.
template <typename Scalar>
class VectorStore {
  public:
    using MatrixMap = Eigen::Map<const Matrix<Scalar>>;

    VectorStore() = default;
    explicit VectorStore(Eigen::Index dim) : dim_(dim) {}

    Eigen::Index dim() const noexcept { return dim_; }
    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(adas_.size()); }
    bool empty() const noexcept { return adas_.empty(); }

    /// Normalizes `v` before storing. Replaces an existing entry for `ada`.
    template <typename Derived>
    void add(std::string ada, const Eigen::MatrixBase<Derived>& v)
    {
        if (v.size() != dim_) throw InvalidArgument("vector dimension mismatch");
        const Vector<Scalar> unit = normalized(v.template cast<Scalar>());
        if (auto existing = find(ada)) {
            std::copy(unit.data(), unit.data() + dim_, data_.begin() + *existing * dim_);
            return;
        }
        index_.emplace(ada, size());
        adas_.push_back(std::move(ada));
        data_.insert(data_.end(), unit.data(), unit.data() + dim_);
    }

    const std::string& ada(Eigen::Index i) const { return adas_[static_cast<std::size_t>(i)]; }
    const std::vector<std::string>& adas() const noexcept { return adas_; }

    MatrixMap matrix() const { return MatrixMap(data_.data(), dim_, size()); }
    auto vector(Eigen::Index i) const { return matrix().col(i); }

    std::optional<Eigen::Index> find(std::string_view ada) const
    {
        const auto it = index_.find(std::string(ada));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    template <typename Other>
    VectorStore<Other> cast() const
    {
        VectorStore<Other> out(dim_);
        for (Eigen::Index i = 0; i < size(); ++i) out.add_unit(ada(i), vector(i).template cast<Other>());
        return out;
    }

    /// Stores `v` as-is; callers guarantee it is already unit length.
    template <typename Derived>
    void add_unit(std::string ada, const Eigen::MatrixBase<Derived>& v)
    {
        index_.emplace(ada, size());
        adas_.push_back(std::move(ada));
        for (Eigen::Index j = 0; j < dim_; ++j) data_.push_back(static_cast<Scalar>(v(j)));
    }

  private:
    Eigen::Index dim_ = 0;
    std::vector<std::string> adas_;
    std::vector<Scalar> data_;
    std::unordered_map<std::string, Eigen::Index> index_;
};

using VectorStoreF = VectorStore<float>;
using VectorStoreD = VectorStore<double>;

/// File format v1, little-endian:
///   "DVEC" u32 version=1 u32 dim u64 count
///   count x { u32 len, UTF-8 ADA }
///   count x dim x f32
void save_vector_store(const VectorStoreF& store, const std::filesystem::path& path);
VectorStoreF load_vector_store(const std::filesystem::path& path);

struct EmbedFailure {
    std::string ada;
    std::string message;
};

struct EmbedResult {
    VectorStoreF store;
    std::vector<EmbedFailure> failures;
};

/// Embeds every stored document's body (its subject when the body is empty).
EmbedResult embed_corpus(const CorpusLayout& layout, const Encoder& encoder, std::size_t workers = 1);

struct Neighbor {
    std::string ada;
    double distance = 0.0;
};

/// Exact k nearest stored vectors to `query` by cosine distance, ascending,
/// ties by ADA. `query` must be unit length.
template <typename Scalar, typename Derived>
std::vector<Neighbor> knn(const VectorStore<Scalar>& store, const Eigen::MatrixBase<Derived>& query, std::size_t k)
{
    if (store.empty()) throw EmptyStore("kNN on an empty vector store");
    if (k == 0) throw InvalidArgument("k must be >= 1");
    if (query.size() != store.dim()) throw InvalidArgument("query dimension mismatch");
    const Eigen::VectorXd sims = (store.matrix().transpose() * query.template cast<Scalar>()).template cast<double>();
    std::vector<Neighbor> all(static_cast<std::size_t>(store.size()));
    for (Eigen::Index i = 0; i < store.size(); ++i) {
        all[static_cast<std::size_t>(i)] = {store.ada(i), std::clamp(1.0 - sims(i), 0.0, 2.0)};
    }
    const auto take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          return a.distance != b.distance ? a.distance < b.distance : a.ada < b.ada;
                      });
    all.resize(take);
    return all;
}

struct DistanceHistogram {
    double lower = 0.0;
    double upper = 2.0;
    std::vector<std::int64_t> counts;
    std::size_t sample_size = 0;

    double bin_width() const noexcept { return (upper - lower) / static_cast<double>(counts.size()); }
    std::int64_t total() const noexcept;
};

/// Histogram over [0, 2] of the cosine distances between all pairs of a
/// seeded uniform sample (without replacement) of `sample_size` vectors.
template <typename Scalar>
DistanceHistogram pairwise_distance_histogram(const VectorStore<Scalar>& store, std::size_t sample_size,
                                              std::size_t bins, std::uint64_t seed);

/// Seeded uniform sample of `count` distinct indices in [0, n), in draw order.
std::vector<Eigen::Index> sample_indices(Eigen::Index n, std::size_t count, std::uint64_t seed);

struct ClusterAssignment {
    int k = 0;
    std::vector<int> assignments;        // per store column
    Matrix<double> centroids;            // dim x k
    double inertia = 0.0;
    std::vector<double> inertia_history; // after every assignment step
    int iterations = 0;
    bool converged = false;

    std::vector<Eigen::Index> members(int cluster) const;
};

/// Lloyd's algorithm with seeded k-means++ initialisation on the (unit) store
/// vectors, Euclidean objective. Stops when assignments repeat or after
/// `max_iterations` assignment steps. Empty clusters keep their centroid.
template <typename Scalar>
ClusterAssignment kmeans(const VectorStore<Scalar>& store, int k, std::uint64_t seed, int max_iterations = 100);

/// Member closest (Euclidean) to the cluster centroid, ties by ADA.
template <typename Scalar>
std::string centroid_document(const ClusterAssignment& assignment, int cluster, const VectorStore<Scalar>& store);

/// Top-n neighbours of a stored document, excluding the document itself.
template <typename Scalar>
std::vector<Neighbor> neighbors_of(const VectorStore<Scalar>& store, std::string_view ada, std::size_t n)
{
    const auto idx = store.find(ada);
    if (!idx) throw NotFound("no vector for " + std::string(ada));
    auto hits = knn(store, store.vector(*idx), n + 1);
    std::erase_if(hits, [&](const Neighbor& h) { return h.ada == ada; });
    if (hits.size() > n) hits.resize(n);
    return hits;
}

nlohmann::json to_json(const DistanceHistogram& hist);
nlohmann::json to_json(const ClusterAssignment& assignment, const std::vector<std::string>& adas);

}  // namespace diavgeia
