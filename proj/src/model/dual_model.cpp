#include "bimind/model/dual_model.hpp"

#include <cmath>

#include "bimind/errors.hpp"

namespace bimind::model {

using num::Parameter;
using num::Tensor;
using num::Var;

FusionMode parse_fusion_mode(const std::string& name) {
    if (name == "entropy_gate") return FusionMode::EntropyGate;
    if (name == "agreement_head") return FusionMode::AgreementHead;
    if (name == "average") return FusionMode::Average;
    if (name == "product_of_experts") return FusionMode::ProductOfExperts;
    throw ConfigError("unknown fusion mode '" + name +
                      "' (expected entropy_gate, agreement_head, average or product_of_experts)");
}

std::string fusion_mode_name(FusionMode mode) {
    switch (mode) {
    case FusionMode::EntropyGate: return "entropy_gate";
    case FusionMode::AgreementHead: return "agreement_head";
    case FusionMode::Average: return "average";
    case FusionMode::ProductOfExperts: return "product_of_experts";
    }
    throw ConfigError("invalid fusion mode");
}

void ModelConfig::validate() const {
    encoder.validate();
    if (d_c > text::kContentFeatureDim) {
        throw ConfigError("d_c = " + std::to_string(d_c) + " exceeds the " + std::to_string(text::kContentFeatureDim) +
                          " available content features");
    }
    if (d_s == 0) throw ConfigError("d_s must be positive");
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be at least 1");
    if (agreement_hidden == 0) throw ConfigError("agreement_hidden must be positive");
    if (!(lambda_agree >= 0.0) || !std::isfinite(lambda_agree)) throw ConfigError("lambda_agree must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

Var film(Var h, Var m_bar, FilmParams& p) {
    num::Tape& t = h.tape();
    Var gamma = num::matmul(m_bar, t.param(p.w_gamma)) + t.param(p.b_gamma);
    Var beta = num::matmul(m_bar, t.param(p.w_beta)) + t.param(p.b_beta);
    return h * num::add_scalar(num::tanh(gamma), 1.0) + beta;
}

HeadOutputs heads(Var h, Var h_e, std::optional<Var> content, HeadParams& p, double dropout, std::mt19937_64* rng,
                  bool training) {
    num::Tape& t = h.tape();
    Var in0 = content ? num::concat_cols({h, *content}) : h;
    Var ine = content ? num::concat_cols({h_e, *content}) : h_e;
    if (training && dropout > 0.0) {
        if (!rng) throw ConfigError("heads: dropout in training needs an RNG");
        in0 = num::dropout(in0, dropout, *rng, true);
        ine = num::dropout(ine, dropout, *rng, true);
    }
    HeadOutputs out;
    out.z0 = num::matmul(in0, t.param(p.w0)) + t.param(p.b0);
    out.ze = num::matmul(ine, t.param(p.we)) + t.param(p.be);
    out.p0 = num::softmax_rows(out.z0);
    out.pe = num::softmax_rows(out.ze);
    return out;
}

Var entropy(Var p) {
    for (double v : p.value().data()) {
        if (v < 0.0) throw ProbabilityError("entropy: negative probability " + std::to_string(v));
    }
    Var plogp = p * num::log(num::clamp_min(p, kProbabilityFloor));
    const std::size_t k = p.value().cols();
    return num::scale(num::mean(plogp, 1), -static_cast<double>(k));
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v < 0.0) throw ProbabilityError("entropy: negative probability " + std::to_string(v));
        h -= v * std::log(std::max(v, kProbabilityFloor));
    }
    return h;
}

Var entropy_gate(Var h, Var h_e, Var h0, Var he, GateParams& p) {
    num::Tape& t = h.tape();
    Var u = num::concat_cols({h, h_e, h0, he});
    return num::sigmoid(num::matmul(u, t.param(p.wg)) + t.param(p.bg));
}

Var fuse(Var z0, Var ze, std::optional<Var> g, FusionMode mode, std::optional<Var> z_agree) {
    switch (mode) {
    case FusionMode::EntropyGate: {
        if (!g) throw ConfigError("fuse: entropy-gate mode needs a gate value");
        Var gv = *g;
        // g z0 + (1 - g) zE, kept in this form so g = 0 and g = 1 are exact.
        return num::mul(z0, gv) + num::mul(ze, num::add_scalar(num::neg(gv), 1.0));
    }
    case FusionMode::Average: return num::scale(z0, 0.5) + num::scale(ze, 0.5);
    case FusionMode::ProductOfExperts: return z0 + ze;
    case FusionMode::AgreementHead:
        if (!z_agree) throw ConfigError("fuse: agreement-head mode needs agreement logits");
        return *z_agree;
    }
    throw ConfigError("fuse: invalid fusion mode");
}

AgreementOutputs agreement_features(Var h, Var h_e, AgreementParams& p) {
    num::Tape& t = h.tape();
    AgreementOutputs out;
    out.phi = num::concat_cols({h, h_e, h * h_e, num::abs(h - h_e)});
    Var hidden = num::relu(num::matmul(out.phi, t.param(p.w1)) + t.param(p.b1));
    out.z = num::matmul(hidden, t.param(p.w2)) + t.param(p.b2);
    out.p = num::softmax_rows(out.z);
    return out;
}

Var sym_kl(Var p, Var q) {
    Var diff = p - q;
    Var logs = num::log(num::clamp_min(p, kProbabilityFloor)) - num::log(num::clamp_min(q, kProbabilityFloor));
    return num::scale(num::sum_all(diff * logs), 0.5);
}

double sym_kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DimensionError("sym_kl: distributions differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += (p[i] - q[i]) * (std::log(std::max(p[i], kProbabilityFloor)) - std::log(std::max(q[i], kProbabilityFloor)));
    }
    return 0.5 * s;
}

Var cross_entropy(Var z, int y) {
    if (y < 0 || static_cast<std::size_t>(y) >= z.value().cols()) {
        throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(z.value().cols()) + ")");
    }
    const std::size_t idx[] = {static_cast<std::size_t>(y)};
    return num::neg(num::pick(num::log_softmax_rows(z), idx));
}

std::array<double, kClasses> class_weights(const std::vector<int>& labels) {
    std::array<double, kClasses> counts{};
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= kClasses) throw LabelError("class_weights: label " + std::to_string(y));
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    std::array<double, kClasses> w{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kClasses; ++k) {
        w[k] = counts[k] > 0.0 ? 1.0 / counts[k] : 0.0;
        sum += w[k];
    }
    if (sum == 0.0) throw LabelError("class_weights: no labels");
    for (auto& v : w) v *= static_cast<double>(kClasses) / sum;
    return w;
}

Var total_loss(const std::vector<ForwardOutput>& batch, const std::vector<int>& labels, double lambda,
               const std::array<double, kClasses>& weights, FusionMode mode) {
    if (batch.empty()) throw DegenerateInputError("total_loss: empty batch");
    if (batch.size() != labels.size()) throw DimensionError("total_loss: one label per instance required");
    if (!(lambda >= 0.0)) throw ConfigError("total_loss: lambda must be >= 0");
    Var total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& f = batch[i];
        const int y = labels[i];
        Var first = cross_entropy(mode == FusionMode::AgreementHead ? *f.z_agree : f.zf, y);
        Var ce = first + num::scale(cross_entropy(f.z0, y) + cross_entropy(f.ze, y), 0.5);
        Var term = num::scale(ce, weights.at(static_cast<std::size_t>(y)));
        if (lambda > 0.0) term = term + num::scale(sym_kl(f.p0, f.pe), lambda);
        total = i == 0 ? term : total + term;
    }
    return num::scale(total, 1.0 / static_cast<double>(batch.size()));
}

namespace {

Parameter weight(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Tensor t({in, out});
    num::init_uniform(t, in, rng);
    return {name, std::move(t)};
}

// Two-class output layer with mirrored columns: logits start (and under
// softmax-only losses stay) zero-sum.
Parameter mirrored_weight(const std::string& name, std::size_t in, std::mt19937_64& rng) {
    Tensor col({in, 1});
    num::init_uniform(col, in, rng);
    Tensor t({in, kClasses});
    for (std::size_t r = 0; r < in; ++r) {
        t(r, 0) = col(r, 0);
        t(r, 1) = -col(r, 0);
    }
    return {name, std::move(t)};
}

Parameter zeros(const std::string& name, std::size_t n) { return {name, Tensor({1, n})}; }

} // namespace

BimindModel::BimindModel(const ModelConfig& config, std::mt19937_64& rng)
    : config_(config), encoder_((config.validate(), config.encoder), rng) {
    const std::size_t d = config_.encoder.d, ds = config_.d_s, dc = config_.d_c;
    film_.w_gamma = weight("film.w_gamma", ds, d, rng);
    film_.b_gamma = zeros("film.b_gamma", d);
    film_.w_beta = weight("film.w_beta", ds, d, rng);
    film_.b_beta = zeros("film.b_beta", d);
    heads_.w0 = mirrored_weight("head0.w", d + dc, rng);
    heads_.b0 = zeros("head0.b", kClasses);
    heads_.we = mirrored_weight("headE.w", d + dc, rng);
    heads_.be = zeros("headE.b", kClasses);
    gate_.wg = weight("gate.w", 2 * d + 2, 1, rng);
    gate_.bg = zeros("gate.b", 1);
    agreement_.w1 = weight("agree.w1", 4 * d, config_.agreement_hidden, rng);
    agreement_.b1 = zeros("agree.b1", config_.agreement_hidden);
    agreement_.w2 = mirrored_weight("agree.w2", config_.agreement_hidden, rng);
    agreement_.b2 = zeros("agree.b2", kClasses);
}

num::ParameterList BimindModel::parameters() {
    auto out = encoder_.parameters();
    for (Parameter* p : {&film_.w_gamma, &film_.b_gamma, &film_.w_beta, &film_.b_beta, &heads_.w0, &heads_.b0,
                         &heads_.we, &heads_.be, &gate_.wg, &gate_.bg, &agreement_.w1, &agreement_.b1, &agreement_.w2,
                         &agreement_.b2}) {
        out.push_back(p);
    }
    return out;
}

ForwardOutput BimindModel::forward(num::Tape& tape, const text::TokenizedDoc& doc, const Tensor& content,
                                   const Tensor& m_bar, const ForwardOptions& options) {
    const std::size_t dc = config_.d_c, ds = config_.d_s;
    if (dc > 0 && content.numel() != dc) {
        throw DimensionError("forward: content features have " + std::to_string(content.numel()) + " entries, d_c = " +
                             std::to_string(dc));
    }
    if (m_bar.numel() != ds) {
        throw DimensionError("forward: memory vector has " + std::to_string(m_bar.numel()) + " entries, d_s = " +
                             std::to_string(ds));
    }
    ForwardOutput out;
    auto enc = encoder_.encode(tape, doc, options.record_attention);
    out.h = enc.pooled;
    out.attention = std::move(enc.attention);
    out.h_e = film(out.h, tape.constant(m_bar.reshaped({1, ds})), film_);
    std::optional<Var> c;
    if (dc > 0) {
        out.content = tape.constant(content.reshaped({1, dc}));
        c = out.content;
    }
    auto hd = heads(out.h, out.h_e, c, heads_, config_.dropout, options.dropout_rng, options.training);
    out.z0 = hd.z0;
    out.ze = hd.ze;
    out.p0 = hd.p0;
    out.pe = hd.pe;
    out.h0 = entropy(out.p0);
    out.he = entropy(out.pe);
    switch (config_.fusion) {
    case FusionMode::EntropyGate: out.gate = entropy_gate(out.h, out.h_e, out.h0, out.he, gate_); break;
    case FusionMode::AgreementHead: {
        auto a = agreement_features(out.h, out.h_e, agreement_);
        out.z_agree = a.z;
        out.p_agree = a.p;
        break;
    }
    default: break;
    }
    out.zf = fuse(out.z0, out.ze, out.gate, config_.fusion, out.z_agree);
    out.pf = num::softmax_rows(out.zf);
    return out;
}

} // namespace bimind::model
