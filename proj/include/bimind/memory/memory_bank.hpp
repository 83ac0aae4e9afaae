#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bimind/numerics/tensor.hpp"
#include "bimind/textprep/document.hpp"

namespace bimind::mem {

struct Embedding {
    std::vector<double> values;
    /// The text produced no features and was replaced by e_0.
    bool zero_replaced = false;
};

/// Maps text to a unit vector of fixed dimension.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual std::uint64_t seed() const = 0;
    virtual Embedding embed(std::string_view text) const = 0;
};

/// Feature-hashed bag of words: each token hashes to one of `buckets`
/// buckets, each bucket owns a fixed random +-1/sqrt(d) direction derived from
/// (seed, bucket), and the count-weighted sum is L2-normalized.
class HashingProvider final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultBuckets = std::size_t{1} << 16;

    explicit HashingProvider(std::size_t d_s = 256, std::uint64_t seed = 0, std::size_t buckets = kDefaultBuckets);

    std::size_t dim() const override { return d_s_; }
    std::uint64_t seed() const override { return seed_; }
    std::size_t buckets() const noexcept { return buckets_; }
    Embedding embed(std::string_view text) const override;

    std::size_t bucket_of(std::string_view token) const;
    /// The projection row of one bucket.
    std::vector<double> bucket_direction(std::size_t bucket) const;

private:
    std::size_t d_s_;
    std::uint64_t seed_;
    std::size_t buckets_;
};

/// Unit-normalized memory rows with their instance ids and labels. Rows are
/// stored rounded to float32 so the persisted file reproduces them bit for bit.
class MemoryBank {
public:
    MemoryBank() = default;
    MemoryBank(std::vector<std::string> ids, std::vector<int> labels, num::Tensor rows, std::uint64_t seed);

    static MemoryBank build(const std::vector<text::Record>& train, const EmbeddingProvider& provider);

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return size() == 0 ? 0 : rows_.cols(); }
    std::uint64_t seed() const noexcept { return seed_; }
    const num::Tensor& rows() const noexcept { return rows_; }
    std::span<const double> row(std::size_t i) const;
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    std::optional<std::size_t> index_of(std::string_view id) const;
    /// Ids whose text embedded to the zero vector.
    const std::vector<std::string>& zero_replaced() const noexcept { return zero_replaced_; }

    /// Throws CompatibilityError if the provider's seed or dimension differ
    /// from the ones the bank was built with.
    void check_compatible(const EmbeddingProvider& provider) const;

    void write(std::ostream& out) const;
    static MemoryBank read(std::istream& in);
    void save(const std::string& path) const;
    static MemoryBank load(const std::string& path);

private:
    std::vector<std::string> ids_;
    std::vector<int> labels_;
    num::Tensor rows_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> zero_replaced_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Neighbors {
    std::vector<std::size_t> indices;
    std::vector<double> similarities;
    /// Fewer than k rows were available.
    bool clamped = false;
};

/// Exact top-k by descending inner product; ties go to the lower row index.
/// The row whose id equals `exclude_id` is skipped.
Neighbors topk(std::span<const double> query, const MemoryBank& bank, std::size_t k,
               std::optional<std::string_view> exclude_id = std::nullopt);

struct Aggregate {
    std::vector<double> mean;
    bool knowledge_absent = false;
};

/// Plain mean of the selected rows; zeros with the absent flag when empty.
Aggregate aggregate(const MemoryBank& bank, const std::vector<std::size_t>& indices, std::size_t dim = 0);

struct RetrievalStats {
    std::size_t queries = 0;
    double top1_mean = 0.0;
    double top1_std = 0.0;
    double topk_mean = 0.0;
    double topk_std = 0.0;
};

/// Distribution over queries of the top-1 similarity and of the mean top-k
/// similarity (population standard deviation).
RetrievalStats retrieval_stats(const MemoryBank& bank, const std::vector<std::vector<double>>& queries, std::size_t k,
                               const std::vector<std::string>* exclude_ids = nullptr);

} // namespace bimind::mem
