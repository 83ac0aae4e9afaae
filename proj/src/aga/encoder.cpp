#include "bimind/aga/encoder.hpp"

#include <cmath>
#include <string>
#include <tuple>

#include "bimind/errors.hpp"

namespace bimind::aga {

using num::Parameter;
using num::Tensor;
using num::Var;

void EncoderConfig::validate() const {
    if (d == 0 || heads == 0 || layers == 0) throw ConfigError("encoder d, heads and layers must be positive");
    if (d % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide model dim d (" + std::to_string(d) + ")");
    }
    if (vocab_size < 2) throw ConfigError("vocabulary must hold at least PAD and UNK");
    if (ff_multiplier == 0 || offset_hidden == 0) throw ConfigError("feed-forward and offset widths must be positive");
}

double effective_temperature(double raw) {
    const double sp = raw > 0.0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
    return sp + kTemperatureFloor;
}

double unit_temperature_raw() {
    static const double raw = [] {
        double r = std::log(std::expm1(1.0 - kTemperatureFloor));
        // walk a few ulps so the rounded temperature is exactly 1
        for (int i = 0; i < 64 && effective_temperature(r) != 1.0; ++i) {
            r = std::nextafter(r, effective_temperature(r) < 1.0 ? INFINITY : -INFINITY);
        }
        return r;
    }();
    return raw;
}

num::ParameterList EncoderLayer::parameters() {
    return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
            &f_q.w1, &f_q.b1, &f_q.w2, &f_q.b2, &f_k.w1, &f_k.b1, &f_k.w2, &f_k.b2,
            &temperature, &ln1_gamma, &ln1_beta, &ff_w1, &ff_b1, &ff_w2, &ff_b2, &ln2_gamma, &ln2_beta};
}

namespace {

Parameter weight(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Tensor t({in, out});
    num::init_uniform(t, in, rng);
    return {name, std::move(t)};
}

Parameter filled(const std::string& name, std::size_t n, double value) { return {name, Tensor({1, n}, value)}; }

Var affine(Var x, Parameter& w, Parameter& b) {
    num::Tape& t = x.tape();
    return num::matmul(x, t.param(w)) + t.param(b);
}

OffsetNetwork make_offset_network(const std::string& prefix, std::size_t hidden, std::size_t heads,
                                  std::mt19937_64& rng) {
    OffsetNetwork net;
    net.w1 = weight(prefix + ".w1", text::kPosCategories, hidden, rng);
    net.b1 = filled(prefix + ".b1", hidden, 0.0);
    // Zero output layer: training starts from standard attention.
    net.w2 = Parameter(prefix + ".w2", Tensor({hidden, heads}));
    net.b2 = filled(prefix + ".b2", heads, 0.0);
    return net;
}

Var run_offset_network(Var p, OffsetNetwork& net) { return affine(num::relu(affine(p, net.w1, net.b1)), net.w2, net.b2); }

} // namespace

std::pair<Var, Var> offset_vectors(Var pos_onehot, EncoderLayer& layer) {
    if (pos_onehot.value().cols() != text::kPosCategories) {
        throw DimensionError("offset_vectors: POS attributes must have " + std::to_string(text::kPosCategories) +
                             " columns, got " + num::shape_string(pos_onehot.shape()));
    }
    return {run_offset_network(pos_onehot, layer.f_q), run_offset_network(pos_onehot, layer.f_k)};
}

AttentionResult aga_attention(Var x, std::optional<Var> query_offsets, std::optional<Var> key_offsets,
                              const num::Mask& mask, EncoderLayer& layer, std::size_t heads, bool use_temperature,
                              bool record_trace) {
    num::Tape& t = x.tape();
    const std::size_t len = x.value().rows();
    const std::size_t d = x.value().cols();
    if (heads == 0 || d % heads != 0) throw ConfigError("aga_attention: heads must divide d");
    if (mask.size() != len) throw DimensionError("aga_attention: mask length differs from sequence length");
    bool any = false;
    for (auto m : mask) any = any || m != 0;
    if (!any) throw DegenerateInputError("aga_attention: every position is masked");
    const std::size_t dk = d / heads;

    Var q = affine(x, layer.wq, layer.bq);
    Var k = affine(x, layer.wk, layer.bk);
    Var v = affine(x, layer.wv, layer.bv);
    std::optional<Var> tau;
    if (use_temperature) tau = num::add_scalar(num::softplus(t.param(layer.temperature)), kTemperatureFloor);

    AttentionResult result;
    std::vector<Var> head_outputs;
    head_outputs.reserve(heads);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = num::slice_cols(q, h * dk, dk);
        Var kh = num::slice_cols(k, h * dk, dk);
        Var vh = num::slice_cols(v, h * dk, dk);
        Var logits = num::scale(num::matmul(qh, num::transpose(kh)), inv_sqrt_dk);
        if (query_offsets) logits = logits + num::slice_cols(*query_offsets, h, 1);
        if (key_offsets) logits = logits + num::transpose(num::slice_cols(*key_offsets, h, 1));
        Var scaled = tau ? num::div(logits, num::slice_cols(*tau, h, 1)) : logits;
        Var alpha = num::softmax_rows(scaled, &mask);
        head_outputs.push_back(num::matmul(alpha, vh));
        if (record_trace) {
            result.trace.logits.push_back(logits.value());
            result.trace.alpha.push_back(alpha.value());
        }
    }
    result.output = affine(num::concat_cols(head_outputs), layer.wo, layer.bo);
    return result;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d) {
    Tensor pe({length, d});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
        }
    }
    return pe;
}

AgaEncoder::AgaEncoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
    config_.validate();
    const std::size_t d = config_.d, ff = config_.ff_multiplier * config_.d, heads = config_.heads;
    {
        Tensor e({config_.vocab_size, d});
        num::init_uniform(e, 1, rng);
        embedding_ = Parameter("encoder.embedding", std::move(e));
    }
    layers_.reserve(config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = "encoder.layer" + std::to_string(l) + ".";
        EncoderLayer layer;
        layer.wq = weight(p + "wq", d, d, rng);
        layer.bq = filled(p + "bq", d, 0.0);
        layer.wk = weight(p + "wk", d, d, rng);
        layer.bk = filled(p + "bk", d, 0.0);
        layer.wv = weight(p + "wv", d, d, rng);
        layer.bv = filled(p + "bv", d, 0.0);
        layer.wo = weight(p + "wo", d, d, rng);
        layer.bo = filled(p + "bo", d, 0.0);
        layer.f_q = make_offset_network(p + "f_q", config_.offset_hidden, heads, rng);
        layer.f_k = make_offset_network(p + "f_k", config_.offset_hidden, heads, rng);
        layer.temperature = filled(p + "temperature", heads, unit_temperature_raw());
        layer.ln1_gamma = filled(p + "ln1_gamma", d, 1.0);
        layer.ln1_beta = filled(p + "ln1_beta", d, 0.0);
        layer.ff_w1 = weight(p + "ff_w1", d, ff, rng);
        layer.ff_b1 = filled(p + "ff_b1", ff, 0.0);
        layer.ff_w2 = weight(p + "ff_w2", ff, d, rng);
        layer.ff_b2 = filled(p + "ff_b2", d, 0.0);
        layer.ln2_gamma = filled(p + "ln2_gamma", d, 1.0);
        layer.ln2_beta = filled(p + "ln2_beta", d, 0.0);
        layers_.push_back(std::move(layer));
    }
}

num::ParameterList AgaEncoder::parameters() {
    num::ParameterList out{&embedding_};
    for (auto& layer : layers_) {
        auto p = layer.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

EncodeResult AgaEncoder::encode(num::Tape& tape, const text::TokenizedDoc& doc, bool record_trace) {
    Var e = text::embed(doc, tape.param(embedding_));
    return encode_embeddings(e, tape.constant(doc.pos_matrix()), doc.mask, record_trace);
}

EncodeResult AgaEncoder::encode_embeddings(Var embeddings, Var pos_onehot, const num::Mask& mask, bool record_trace) {
    num::Tape& t = embeddings.tape();
    const std::size_t len = embeddings.value().rows();
    if (embeddings.value().cols() != config_.d) {
        throw DimensionError("encode: embeddings " + num::shape_string(embeddings.shape()) + " for d=" +
                             std::to_string(config_.d));
    }
    if (pos_onehot.value().rows() != len || mask.size() != len) {
        throw DimensionError("encode: POS attributes and mask must have one row per token");
    }
    Var x = config_.positional_encoding ? embeddings + t.constant(sinusoidal_positions(len, config_.d)) : embeddings;

    EncodeResult result;
    for (auto& layer : layers_) {
        std::optional<Var> dq, dk;
        if (config_.use_aga) std::tie(dq, dk) = offset_vectors(pos_onehot, layer);
        auto att = aga_attention(x, dq, dk, mask, layer, config_.heads, config_.use_aga, record_trace);
        Var x1 = num::layer_norm_rows(x + att.output, t.param(layer.ln1_gamma), t.param(layer.ln1_beta));
        Var ff = affine(num::relu(affine(x1, layer.ff_w1, layer.ff_b1)), layer.ff_w2, layer.ff_b2);
        x = num::layer_norm_rows(x1 + ff, t.param(layer.ln2_gamma), t.param(layer.ln2_beta));
        if (record_trace) result.attention.push_back(std::move(att.trace));
    }
    result.sequence = x;
    result.pooled = num::masked_max_rows(x, mask);
    return result;
}

std::vector<HeadDiagnostics> attention_entropy(const std::vector<LayerAttention>& trace, const num::Mask& mask,
                                               const std::vector<text::PosCategory>& pos) {
    std::vector<HeadDiagnostics> out;
    for (std::size_t l = 0; l < trace.size(); ++l) {
        for (std::size_t h = 0; h < trace[l].alpha.size(); ++h) {
            const Tensor& a = trace[l].alpha[h];
            const std::size_t len = a.rows();
            if (mask.size() != len || pos.size() != len) {
                throw DimensionError("attention_entropy: mask/POS length differs from attention rows");
            }
            HeadDiagnostics hd;
            hd.layer = l;
            hd.head = h;
            std::size_t rows = 0;
            for (std::size_t i = 0; i < len; ++i) {
                if (!mask[i]) continue;
                ++rows;
                double ent = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    const double p = a(i, j);
                    if (p > 0.0) ent -= p * std::log(p);
                    hd.pos_mass[static_cast<std::size_t>(pos[j])] += p;
                }
                hd.mean_entropy += ent;
            }
            if (rows > 0) {
                hd.mean_entropy /= static_cast<double>(rows);
                for (auto& m : hd.pos_mass) m /= static_cast<double>(rows);
            }
            out.push_back(hd);
        }
    }
    return out;
}

void AttentionDiagnostics::add(const std::vector<HeadDiagnostics>& doc) {
    if (docs_ == 0) {
        sum_ = doc;
    } else {
        if (doc.size() != sum_.size()) throw DimensionError("AttentionDiagnostics: head layout changed between documents");
        for (std::size_t i = 0; i < doc.size(); ++i) {
            sum_[i].mean_entropy += doc[i].mean_entropy;
            for (std::size_t c = 0; c < text::kPosCategories; ++c) sum_[i].pos_mass[c] += doc[i].pos_mass[c];
        }
    }
    ++docs_;
}

std::vector<HeadDiagnostics> AttentionDiagnostics::mean() const {
    auto out = sum_;
    if (docs_ == 0) return out;
    for (auto& h : out) {
        h.mean_entropy /= static_cast<double>(docs_);
        for (auto& m : h.pos_mass) m /= static_cast<double>(docs_);
    }
    return out;
}

} // namespace bimind::aga
