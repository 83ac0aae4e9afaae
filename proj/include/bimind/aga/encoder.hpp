#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "bimind/numerics/ops.hpp"
#include "bimind/textprep/document.hpp"

namespace bimind::aga {

struct EncoderConfig {
    std::size_t vocab_size = 2;
    std::size_t d = 128;
    std::size_t heads = 16;
    std::size_t layers = 2;
    std::size_t ff_multiplier = 4;
    std::size_t offset_hidden = 16;
    /// Off: plain multi-head attention (no offsets, unit temperature).
    bool use_aga = true;
    bool positional_encoding = true;

    std::size_t head_dim() const { return d / heads; }
    void validate() const;
};

/// Two-layer map from the 5-way POS one-hot to one offset per head.
struct OffsetNetwork {
    num::Parameter w1, b1, w2, b2;
};

struct EncoderLayer {
    num::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    OffsetNetwork f_q, f_k;
    /// Raw temperature parameters; the effective temperature is softplus(t) + 0.1.
    num::Parameter temperature;
    num::Parameter ln1_gamma, ln1_beta;
    num::Parameter ff_w1, ff_b1, ff_w2, ff_b2;
    num::Parameter ln2_gamma, ln2_beta;

    num::ParameterList parameters();
};

inline constexpr double kTemperatureFloor = 0.1;
/// Raw value whose effective temperature is 1.
double unit_temperature_raw();
double effective_temperature(double raw);

/// Attention record for one layer: per head, the L x L logits before
/// temperature scaling and the post-softmax weights.
struct LayerAttention {
    std::vector<num::Tensor> logits;
    std::vector<num::Tensor> alpha;
};

/// (query offsets, key offsets), each L x H.
std::pair<num::Var, num::Var> offset_vectors(num::Var pos_onehot, EncoderLayer& layer);

struct AttentionResult {
    num::Var output;
    LayerAttention trace;
};

/// Multi-head attention whose logits q.k/sqrt(d_k) are shifted by the query
/// offset of row i and the key offset of column j, divided by the head
/// temperature, and masked over PAD keys before the softmax. Without offsets
/// (`query_offsets` empty) and `use_temperature` false this is the standard
/// scaled dot-product attention.
AttentionResult aga_attention(num::Var x, std::optional<num::Var> query_offsets, std::optional<num::Var> key_offsets,
                              const num::Mask& mask, EncoderLayer& layer, std::size_t heads, bool use_temperature,
                              bool record_trace);

struct EncodeResult {
    num::Var sequence; // L x d
    num::Var pooled;   // 1 x d
    std::vector<LayerAttention> attention;
};

num::Tensor sinusoidal_positions(std::size_t length, std::size_t d);

class AgaEncoder {
public:
    AgaEncoder(const EncoderConfig& config, std::mt19937_64& rng);

    AgaEncoder(const AgaEncoder&) = delete;
    AgaEncoder& operator=(const AgaEncoder&) = delete;
    AgaEncoder(AgaEncoder&&) = default;
    AgaEncoder& operator=(AgaEncoder&&) = default;

    /// Embeds, adds positions, runs every layer and max-pools the unmasked rows.
    EncodeResult encode(num::Tape& tape, const text::TokenizedDoc& doc, bool record_trace = false);
    /// Same from precomputed embeddings (L x d) and POS one-hots (L x 5).
    EncodeResult encode_embeddings(num::Var embeddings, num::Var pos_onehot, const num::Mask& mask,
                                   bool record_trace = false);

    const EncoderConfig& config() const noexcept { return config_; }
    num::Parameter& embedding() noexcept { return embedding_; }
    EncoderLayer& layer(std::size_t i) { return layers_.at(i); }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    num::ParameterList parameters();

private:
    EncoderConfig config_;
    num::Parameter embedding_;
    std::vector<EncoderLayer> layers_;
};

struct HeadDiagnostics {
    std::size_t layer = 0;
    std::size_t head = 0;
    /// Mean over unmasked query rows of the row entropy (nats).
    double mean_entropy = 0.0;
    /// Attention mass landing on keys of each POS category, averaged over
    /// unmasked query rows; sums to 1.
    std::array<double, text::kPosCategories> pos_mass{};
};

std::vector<HeadDiagnostics> attention_entropy(const std::vector<LayerAttention>& trace, const num::Mask& mask,
                                               const std::vector<text::PosCategory>& pos);

/// Averages per-head diagnostics over many documents.
class AttentionDiagnostics {
public:
    void add(const std::vector<HeadDiagnostics>& doc);
    std::vector<HeadDiagnostics> mean() const;
    std::size_t documents() const noexcept { return docs_; }

private:
    std::vector<HeadDiagnostics> sum_;
    std::size_t docs_ = 0;
};

} // namespace bimind::aga
