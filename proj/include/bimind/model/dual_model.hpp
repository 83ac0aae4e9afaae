#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bimind/aga/encoder.hpp"
#include "bimind/numerics/ops.hpp"

namespace bimind::model {

inline constexpr std::size_t kClasses = 2;
inline constexpr double kProbabilityFloor = 1e-9;

enum class FusionMode { EntropyGate, AgreementHead, Average, ProductOfExperts };

FusionMode parse_fusion_mode(const std::string& name);
std::string fusion_mode_name(FusionMode mode);

struct ModelConfig {
    aga::EncoderConfig encoder;
    /// Leading entries of the content feature vector fed to both heads.
    std::size_t d_c = 8;
    std::size_t d_s = 256;
    std::size_t k_neighbors = 3;
    std::size_t agreement_hidden = 64;
    FusionMode fusion = FusionMode::EntropyGate;
    double lambda_agree = 0.1;
    double dropout = 0.3;
    bool use_retrieval = true;

    void validate() const;
};

// All weights are stored inputs x outputs and applied to row vectors.

struct FilmParams {
    num::Parameter w_gamma, b_gamma, w_beta, b_beta; // d_s x d, 1 x d
};

struct HeadParams {
    num::Parameter w0, b0, we, be; // (d + d_c) x K, 1 x K
};

struct GateParams {
    num::Parameter wg, bg; // (2d + 2) x 1, 1 x 1
};

struct AgreementParams {
    num::Parameter w1, b1, w2, b2; // 4d x hidden, 1 x hidden, hidden x K, 1 x K
};

/// h (1 x d), m_bar (1 x d_s) -> h * (1 + tanh(gamma)) + beta.
num::Var film(num::Var h, num::Var m_bar, FilmParams& p);

struct HeadOutputs {
    num::Var z0, ze, p0, pe;
};

/// Content head over [h; c] and knowledge head over [h_E; c]. `content`
/// has zero columns when d_c = 0; dropout (training only) acts on both inputs.
HeadOutputs heads(num::Var h, num::Var h_e, std::optional<num::Var> content, HeadParams& p, double dropout = 0.0,
                  std::mt19937_64* rng = nullptr, bool training = false);

/// -sum p log max(p, 1e-9) over each row; m x 1. Throws ProbabilityError on
/// a negative entry.
num::Var entropy(num::Var p);
double entropy(std::span<const double> p);

/// sigma(u W_g + b_g) with u = [h; h_E; H_0; H_E].
num::Var entropy_gate(num::Var h, num::Var h_e, num::Var h0, num::Var he, GateParams& p);

/// Fused logits. `g` is used only by the entropy-gate mode; the agreement
/// mode needs `z_agree`.
num::Var fuse(num::Var z0, num::Var ze, std::optional<num::Var> g, FusionMode mode,
              std::optional<num::Var> z_agree = std::nullopt);

struct AgreementOutputs {
    num::Var phi, z, p;
};

/// phi = [h; h_E; h * h_E; |h - h_E|], z_A = ReLU(phi W1 + b1) W2 + b2.
AgreementOutputs agreement_features(num::Var h, num::Var h_e, AgreementParams& p);

/// Half the sum of both KL directions, clamped at 1e-9 inside the logs.
num::Var sym_kl(num::Var p, num::Var q);
double sym_kl(std::span<const double> p, std::span<const double> q);

/// -log softmax(z)[y] for a 1 x K logit row.
num::Var cross_entropy(num::Var z, int y);

/// Inverse class frequency, scaled so the weights average to 1 over classes.
/// Classes absent from `labels` get weight 0 before rescaling.
std::array<double, kClasses> class_weights(const std::vector<int>& labels);

struct ForwardOutput {
    num::Var h, h_e, content;
    num::Var z0, ze, p0, pe;
    num::Var h0, he; // entropies, 1 x 1
    std::optional<num::Var> gate;
    std::optional<num::Var> z_agree, p_agree;
    num::Var zf, pf;
    std::vector<aga::LayerAttention> attention;
};

/// w_y [CE(z_F or z_A) + CE(z_0)/2 + CE(z_E)/2] + lambda symKL, averaged over
/// the batch.
num::Var total_loss(const std::vector<ForwardOutput>& batch, const std::vector<int>& labels, double lambda,
                    const std::array<double, kClasses>& weights, FusionMode mode);

struct ForwardOptions {
    bool training = false;
    std::mt19937_64* dropout_rng = nullptr;
    bool record_attention = false;
};

class BimindModel {
public:
    BimindModel(const ModelConfig& config, std::mt19937_64& rng);

    BimindModel(const BimindModel&) = delete;
    BimindModel& operator=(const BimindModel&) = delete;
    BimindModel(BimindModel&&) = default;
    BimindModel& operator=(BimindModel&&) = default;

    /// One instance: the document, its content features (1 x d_c, ignored
    /// when d_c = 0) and the aggregated neighbor memory (1 x d_s).
    ForwardOutput forward(num::Tape& tape, const text::TokenizedDoc& doc, const num::Tensor& content,
                          const num::Tensor& m_bar, const ForwardOptions& options = {});

    const ModelConfig& config() const noexcept { return config_; }
    ModelConfig& mutable_config() noexcept { return config_; }
    aga::AgaEncoder& encoder() noexcept { return encoder_; }
    FilmParams& film_params() noexcept { return film_; }
    HeadParams& head_params() noexcept { return heads_; }
    GateParams& gate_params() noexcept { return gate_; }
    AgreementParams& agreement_params() noexcept { return agreement_; }
    num::ParameterList parameters();

private:
    ModelConfig config_;
    aga::AgaEncoder encoder_;
    FilmParams film_;
    HeadParams heads_;
    GateParams gate_;
    AgreementParams agreement_;
};

} // namespace bimind::model
