#include "bimind/memory/memory_bank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "bimind/errors.hpp"
#include "json.hpp"

namespace bimind::mem {

using nlohmann::json;
using num::Tensor;

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

constexpr int kFormatVersion = 1;

} // namespace

HashingProvider::HashingProvider(std::size_t d_s, std::uint64_t seed, std::size_t buckets)
    : d_s_(d_s), seed_(seed), buckets_(buckets) {
    if (d_s == 0 || buckets == 0) throw ConfigError("HashingProvider: d_s and bucket count must be positive");
}

std::size_t HashingProvider::bucket_of(std::string_view token) const { return fnv1a(token) % buckets_; }

std::vector<double> HashingProvider::bucket_direction(std::size_t bucket) const {
    std::mt19937_64 gen(splitmix64(seed_ ^ splitmix64(bucket)));
    const double amp = 1.0 / std::sqrt(static_cast<double>(d_s_));
    std::vector<double> row(d_s_);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < d_s_; ++i) {
        if (i % 64 == 0) bits = gen();
        row[i] = (bits >> (i % 64)) & 1U ? amp : -amp;
    }
    return row;
}

Embedding HashingProvider::embed(std::string_view text) const {
    Embedding out;
    out.values.assign(d_s_, 0.0);
    auto tokens = text::tokenize(text);
    if (!tokens.empty_input) {
        std::map<std::size_t, double> counts;
        for (const auto& t : tokens.items) counts[bucket_of(t)] += 1.0;
        for (const auto& [bucket, count] : counts) {
            auto dir = bucket_direction(bucket);
            for (std::size_t i = 0; i < d_s_; ++i) out.values[i] += count * dir[i];
        }
    }
    double norm = std::sqrt(dot(out.values, out.values));
    // Colliding opposite-sign buckets can cancel exactly; treat like empty text.
    if (norm == 0.0) {
        out.values[0] = 1.0;
        out.zero_replaced = true;
        return out;
    }
    for (auto& v : out.values) v /= norm;
    return out;
}

MemoryBank::MemoryBank(std::vector<std::string> ids, std::vector<int> labels, Tensor rows, std::uint64_t seed)
    : ids_(std::move(ids)), labels_(std::move(labels)), rows_(std::move(rows)), seed_(seed) {
    if (ids_.empty()) throw DatasetError("memory bank: no rows");
    if (labels_.size() != ids_.size() || rows_.rows() != ids_.size() || rows_.rank() != 2) {
        throw DimensionError("memory bank: " + std::to_string(ids_.size()) + " ids, " + std::to_string(labels_.size()) +
                             " labels, rows " + num::shape_string(rows_.shape()));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) throw DatasetError("memory bank: duplicate id '" + ids_[i] + "'");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        auto r = row(i);
        const double n = std::sqrt(dot(r, r));
        if (!(std::abs(n - 1.0) <= 1e-6)) {
            throw DegenerateInputError("memory bank: row " + std::to_string(i) + " has norm " + std::to_string(n));
        }
    }
}

MemoryBank MemoryBank::build(const std::vector<text::Record>& train, const EmbeddingProvider& provider) {
    if (train.empty()) throw DatasetError("memory bank: empty training set");
    const std::size_t d = provider.dim();
    Tensor rows({train.size(), d});
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::string> zeros;
    for (std::size_t i = 0; i < train.size(); ++i) {
        auto e = provider.embed(train[i].text);
        if (e.zero_replaced) zeros.push_back(train[i].id);
        for (std::size_t c = 0; c < d; ++c) rows(i, c) = static_cast<double>(static_cast<float>(e.values[c]));
        ids.push_back(train[i].id);
        labels.push_back(train[i].label);
    }
    MemoryBank bank(std::move(ids), std::move(labels), std::move(rows), provider.seed());
    bank.zero_replaced_ = std::move(zeros);
    return bank;
}

std::span<const double> MemoryBank::row(std::size_t i) const {
    if (i >= size()) throw DimensionError("memory bank: row " + std::to_string(i) + " out of " + std::to_string(size()));
    return rows_.data().subspan(i * dim(), dim());
}

std::optional<std::size_t> MemoryBank::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void MemoryBank::check_compatible(const EmbeddingProvider& provider) const {
    if (provider.dim() != dim() || provider.seed() != seed_) {
        throw CompatibilityError("memory bank built with (seed " + std::to_string(seed_) + ", d_s " +
                                 std::to_string(dim()) + ") but provider has (seed " + std::to_string(provider.seed()) +
                                 ", d_s " + std::to_string(provider.dim()) + ")");
    }
}

void MemoryBank::write(std::ostream& out) const {
    json header = {{"n", size()}, {"d_s", dim()}, {"seed", seed_}, {"version", kFormatVersion}};
    out << header.dump() << '\n';
    std::vector<char> buf(4 * rows_.numel());
    for (std::size_t i = 0; i < rows_.numel(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(rows_[i]));
        for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    json meta = json::array();
    for (std::size_t i = 0; i < size(); ++i) meta.push_back({{"id", ids_[i]}, {"label", labels_[i]}});
    out << meta.dump() << '\n';
    if (!out) throw FormatError("memory bank: write failed");
}

MemoryBank MemoryBank::read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("memory file: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError(std::string("memory file: bad header: ") + e.what());
    }
    std::size_t n = 0, d = 0;
    std::uint64_t seed = 0;
    try {
        if (header.at("version").get<int>() != kFormatVersion) throw FormatError("memory file: unsupported version");
        n = header.at("n").get<std::size_t>();
        d = header.at("d_s").get<std::size_t>();
        seed = header.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("memory file: header field: ") + e.what());
    }
    if (n == 0 || d == 0) throw FormatError("memory file: empty bank");
    std::vector<unsigned char> buf(4 * n * d);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError("memory file: truncated row data");
    Tensor rows({n, d});
    for (std::size_t i = 0; i < n * d; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
        rows[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    if (!std::getline(in, line)) throw FormatError("memory file: missing id/label trailer");
    std::vector<std::string> ids;
    std::vector<int> labels;
    try {
        json meta = json::parse(line);
        if (!meta.is_array() || meta.size() != n) throw FormatError("memory file: trailer must list one entry per row");
        for (const auto& m : meta) {
            ids.push_back(m.at("id").get<std::string>());
            labels.push_back(m.at("label").get<int>());
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("memory file: bad trailer: ") + e.what());
    }
    return MemoryBank(std::move(ids), std::move(labels), std::move(rows), seed);
}

void MemoryBank::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    write(out);
}

MemoryBank MemoryBank::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open memory file '" + path + "'");
    return read(in);
}

Neighbors topk(std::span<const double> query, const MemoryBank& bank, std::size_t k,
               std::optional<std::string_view> exclude_id) {
    if (k == 0) throw ConfigError("topk: k must be at least 1");
    if (query.size() != bank.dim()) {
        throw DimensionError("topk: query dim " + std::to_string(query.size()) + " vs bank dim " +
                             std::to_string(bank.dim()));
    }
    std::optional<std::size_t> skip;
    if (exclude_id) skip = bank.index_of(*exclude_id);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(bank.size());
    for (std::size_t j = 0; j < bank.size(); ++j) {
        if (skip && *skip == j) continue;
        scored.emplace_back(dot(query, bank.row(j)), j);
    }
    Neighbors out;
    if (k > scored.size()) {
        k = scored.size();
        out.clamped = true;
    }
    auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
    for (std::size_t i = 0; i < k; ++i) {
        out.indices.push_back(scored[i].second);
        out.similarities.push_back(scored[i].first);
    }
    return out;
}

Aggregate aggregate(const MemoryBank& bank, const std::vector<std::size_t>& indices, std::size_t dim) {
    Aggregate out;
    const std::size_t d = bank.size() > 0 ? bank.dim() : dim;
    out.mean.assign(d, 0.0);
    if (indices.empty()) {
        out.knowledge_absent = true;
        return out;
    }
    std::vector<std::size_t> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw DimensionError("aggregate: neighbor indices must be distinct");
    }
    // Summing in sorted order keeps the result independent of index order.
    for (std::size_t j : sorted) {
        auto r = bank.row(j);
        for (std::size_t c = 0; c < d; ++c) out.mean[c] += r[c];
    }
    for (auto& v : out.mean) v /= static_cast<double>(sorted.size());
    return out;
}

RetrievalStats retrieval_stats(const MemoryBank& bank, const std::vector<std::vector<double>>& queries, std::size_t k,
                               const std::vector<std::string>* exclude_ids) {
    if (queries.empty()) throw DegenerateInputError("retrieval_stats: no queries");
    if (exclude_ids && exclude_ids->size() != queries.size()) {
        throw DimensionError("retrieval_stats: one exclusion id per query required");
    }
    std::vector<double> top1, meank;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::optional<std::string_view> ex;
        if (exclude_ids) ex = (*exclude_ids)[q];
        auto nb = topk(queries[q], bank, k, ex);
        if (nb.indices.empty()) continue;
        top1.push_back(nb.similarities.front());
        meank.push_back(std::accumulate(nb.similarities.begin(), nb.similarities.end(), 0.0) /
                        static_cast<double>(nb.similarities.size()));
    }
    auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    RetrievalStats s;
    s.queries = top1.size();
    if (s.queries == 0) throw DegenerateInputError("retrieval_stats: every query had its only row excluded");
    moments(top1, s.top1_mean, s.top1_std);
    moments(meank, s.topk_mean, s.topk_std);
    return s;
}

} // namespace bimind::mem
